from __future__ import annotations

import sys

from termdecode.cli import main

sys.exit(main())
