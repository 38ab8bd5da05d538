from grayrank import cli
import sys


if __name__ == '__main__':
    sys.exit(cli.main())
