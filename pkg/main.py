#!/usr/bin/env python
"""
Main entry point for the spot rotation toolkit.
"""

from spot_rotation.cli import main

if __name__ == '__main__':
    main()
