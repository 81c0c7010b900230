import sys

from cdwce.cli import main

sys.exit(main())
