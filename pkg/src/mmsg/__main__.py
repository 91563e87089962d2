from mmsg.cli import main
import sys

sys.exit(main())
