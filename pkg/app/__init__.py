from pathlib import Path

APP_PATH = Path(__file__).parent.absolute()
