import sys

from restrule.cli import main

sys.exit(main())
