import sys

from sliceguard.cli import main

sys.exit(main())
