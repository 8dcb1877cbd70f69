"""Cavity sideband cooling of a collective atomic motional mode.

Modules: ``model`` (closed-form physics), ``dynamics`` (rate equation and
Langevin simulation), ``photodetect`` (photocount records), ``analysis``
(thermometry, decay and spectral fits), ``cli`` (configuration and runs).
"""

__version__ = "0.1.0"
