import sys

from isdim.cli import main

sys.exit(main())
