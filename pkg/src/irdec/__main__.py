"""Allow ``python -m irdec`` as an alternative to the ``irdec`` script."""

import sys

from irdec.cli import main

if __name__ == "__main__":
    sys.exit(main())
