from ligspace.cli import app

app()
