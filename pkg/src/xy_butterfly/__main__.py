import sys

from xy_butterfly.cli import main

sys.exit(main())
