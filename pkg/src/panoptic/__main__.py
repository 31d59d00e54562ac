import sys

from panoptic.harness.cli import main

sys.exit(main())
