import sys

import eulerncl.app


def main():
    sys.exit(eulerncl.app.run())
