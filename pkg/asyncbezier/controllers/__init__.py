"""Controllers of the asyncbezier package."""

from asyncbezier.controllers import datasets  # noqa
from asyncbezier.controllers import training  # noqa
from asyncbezier.controllers import correction  # noqa
from asyncbezier.controllers import aggregation  # noqa
from asyncbezier.controllers import metrics  # noqa
from asyncbezier.controllers import simulation  # noqa
from asyncbezier.controllers import experiment  # noqa
