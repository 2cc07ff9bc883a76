import sys

from detector.main import main

if __name__ == "__main__":
    sys.exit(main())
