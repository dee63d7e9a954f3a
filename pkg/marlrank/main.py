import logging

from marlrank.api.v1 import cli

logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)


def main() -> None:
    cli(prog_name="marlrank")


if __name__ == "__main__":
    main()
