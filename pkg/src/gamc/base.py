"""Minimal scikit-learn compatible estimator plumbing.

The estimators in this package follow the sklearn protocol (``fit`` /
``transform`` / ``predict``, ``get_params`` / ``set_params``, trailing
underscore on fitted attributes) without depending on scikit-learn itself,
so they duck-type into ``sklearn.pipeline.Pipeline`` and friends when that
library is around.
"""

from __future__ import annotations

import inspect

from .errors import InvalidConfig, NotFittedError


class BaseEstimator:
    """get_params/set_params implemented via ``__init__`` introspection.

    Subclasses must store every constructor argument on ``self`` under the
    same name and perform no other work in ``__init__`` (the sklearn
    convention).
    """

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "BaseEstimator":
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise InvalidConfig(
                    f"unknown parameter {key!r} for {type(self).__name__}; "
                    f"valid parameters: {sorted(valid)}"
                )
            setattr(self, key, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


class TransformerMixin:
    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).transform(X)


def check_is_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} instance is not fitted yet; "
            f"call fit() before using this method"
        )
