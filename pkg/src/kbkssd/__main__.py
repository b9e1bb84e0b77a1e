import sys

from kbkssd.cli import main

sys.exit(main())
