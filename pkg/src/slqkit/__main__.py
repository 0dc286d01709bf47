"""Allow ``python -m slqkit`` to invoke the experiment-runner CLI."""

from .cli import main

if __name__ == "__main__":
    raise SystemExit(main())
