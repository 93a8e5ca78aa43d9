import sys

from lipdet.cli import main

sys.exit(main())
