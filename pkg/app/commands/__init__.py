import typer

from . import costs, demo, generate, run, score


def register(cli: typer.Typer) -> None:
    """Registers every command on the root application."""
    cli.command()(generate.generate)
    cli.command()(run.run)
    cli.command()(score.score)
    cli.command()(demo.demo)
    cli.command()(costs.costs)


__all__ = ["register"]
