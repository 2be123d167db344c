def r():
    c = int(input())
    g = {n: [] for n in range(c)}
    for _ in range(c - 1):
        a, b = map(int, input().split())
        g[a].append(b)
        g[b].append(a)
    return g


def f(g, s):
    d = {s: 0}
    q = [s]
    while q:
        n = q.pop(0)
        for m in g[n]:
            if m not in d:
                d[m] = d[n] + 1
                q.append(m)
    return d
