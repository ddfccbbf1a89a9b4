import sys

from wdp_lti.cli import main

sys.exit(main())
