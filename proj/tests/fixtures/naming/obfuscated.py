from codebank import *


def main():
    g = r()
    d = f(g, 0)
    for n in sorted(d):
        print(n, d[n])


main()
