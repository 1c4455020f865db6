import sys

from .cli.modeling_cli import main

if __name__ == "__main__":
    sys.exit(main())
