import sys

from drat.main import main

sys.exit(main())
