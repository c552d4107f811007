from datetime import datetime

from pkg_resources import get_distribution


project = "gism"
copyright = f"{datetime.now().year}, gism developers"
author = "gism developers"
release = get_distribution("gism").version
extensions = ["sphinx.ext.autodoc"]
html_theme = "sphinx_rtd_theme"
