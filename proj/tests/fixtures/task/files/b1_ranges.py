import sys


def main():
    n, q = map(int, sys.stdin.readline().split())
    values = list(map(int, sys.stdin.readline().split()))
    prefix = [0] * (n + 1)
    for i in range(n):
        prefix[i + 1] = prefix[i] + values[i]
    out = []
    for _ in range(q):
        left, right = map(int, sys.stdin.readline().split())
        out.append(str(prefix[right] - prefix[left - 1]))
    print("\n".join(out))


main()
