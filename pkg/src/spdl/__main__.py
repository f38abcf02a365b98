import sys

from spdl.cli import main

sys.exit(main())
