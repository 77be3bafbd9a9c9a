import sys

from cfgle.cli import main

sys.exit(main())
