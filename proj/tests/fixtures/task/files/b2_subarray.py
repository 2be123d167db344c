import sys


def main():
    n = int(sys.stdin.readline())
    values = list(map(int, sys.stdin.readline().split()))
    best = values[0]
    current = 0
    for v in values:
        current = max(v, current + v)
        best = max(best, current)
    print(best)
    if n != len(values):
        print("length mismatch", file=sys.stderr)


main()
