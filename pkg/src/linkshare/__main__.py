import sys

from linkshare.cli import main

sys.exit(main())
