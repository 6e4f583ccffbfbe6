import sys

from pathogan.main import main

sys.exit(main())
