import sys

from solitonlab.app.cli import run


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
