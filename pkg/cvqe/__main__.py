import sys

from cvqe.cli import main

sys.exit(main())
