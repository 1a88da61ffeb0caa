import sys

from biasasr.cli import main

sys.exit(main())
