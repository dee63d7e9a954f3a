import logging

import click

from marlrank.router import router as commands_router


@click.group(name="marlrank")
@click.option("--log-level", envvar="MARLRANK_LOG_LEVEL", default="INFO", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
def cli(log_level: str):
    """Multi-agent reinforced learning to rank: data preparation, training, evaluation and checks."""
    logging.getLogger().setLevel(log_level.upper())


for name, command in commands_router.commands.items():
    cli.add_command(command, name)
