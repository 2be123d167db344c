import heapq
import sys


def read_graph(lines):
    """Parse an edge list into an adjacency map."""
    n, m = map(int, lines[0].split())
    graph = {v: [] for v in range(1, n + 1)}
    for line in lines[1:m + 1]:
        u, v, w = map(int, line.split())
        graph[u].append((v, w))
        graph[v].append((u, w))
    return n, graph


def dijkstra(graph, source):
    dist = {source: 0}
    heap = [(0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, float("inf")):
            continue
        for v, w in graph[u]:
            nd = d + w
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def main():
    lines = sys.stdin.read().splitlines()
    n, graph = read_graph(lines)
    dist = dijkstra(graph, 1)
    # unreachable vertices print -1
    print(" ".join(str(dist.get(v, -1)) for v in range(1, n + 1)))


if __name__ == "__main__":
    main()
