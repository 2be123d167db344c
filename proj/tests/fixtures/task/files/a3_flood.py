import sys


def main():
    h, w = map(int, sys.stdin.readline().split())
    grid = [sys.stdin.readline().strip() for _ in range(h)]
    sr, sc = map(int, sys.stdin.readline().split())
    target = grid[sr][sc]
    seen = {(sr, sc)}
    stack = [(sr, sc)]
    while stack:
        r, c = stack.pop()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and grid[nr][nc] == target and (nr, nc) not in seen:
                seen.add((nr, nc))
                stack.append((nr, nc))
    print(len(seen))


main()
