import sys


def is_prime(n):
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


def main():
    q = int(sys.stdin.readline())
    limits = list(map(int, sys.stdin.readline().split()))
    for limit in limits[:q]:
        print(sum(1 for k in range(limit + 1) if is_prime(k)))


main()
