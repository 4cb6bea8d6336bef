import sys

from kpflm.cli import main

sys.exit(main())
