import sys

from capastat.cli import main

sys.exit(main())
