"""Scikit-learn style front end over the training loop.

``GlowGSReconstructor`` exposes the usual estimator surface (get_params /
set_params / fit / predict / score) so runs compose with parameter sweeps and
pipelines; everything heavy lives in :mod:`glowgs.trainer`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from glowgs.errors import InvalidInputError
from glowgs.featbank import FeatureBank
from glowgs.gaussians import Camera
from glowgs.rasterizer import rasterize
from glowgs.scene import GaussianScene, random_scene
from glowgs.trainer import TrainConfig, train
from glowgs.metrics import psnr
from glowgs.validation import check_camera, check_posed_views


class GlowGSReconstructor(BaseEstimator):
    """Fit a Gaussian-splat scene to posed views; predict renders new poses.

    Parameters mirror :class:`glowgs.trainer.TrainConfig`; ``bank`` supplies
    the feature-bank supervision and may be None when ``lambda_weight`` is 1.
    """

    def __init__(
        self,
        lambda_weight: float = 0.01,
        iters: int = 300,
        semantic_every: int = 10,
        semantic_enabled: bool = True,
        perturb_rot_deg: float = 2.0,
        perturb_trans_frac: float = 0.01,
        init_count: int = 2000,
        sh_degree: int = 1,
        seed: int = 0,
        bank: FeatureBank | None = None,
    ):
        self.lambda_weight = lambda_weight
        self.iters = iters
        self.semantic_every = semantic_every
        self.semantic_enabled = semantic_enabled
        self.perturb_rot_deg = perturb_rot_deg
        self.perturb_trans_frac = perturb_trans_frac
        self.init_count = init_count
        self.sh_degree = sh_degree
        self.seed = seed
        self.bank = bank

    def _config(self) -> TrainConfig:
        return TrainConfig(
            lambda_weight=self.lambda_weight,
            iters=self.iters,
            semantic_every=self.semantic_every,
            semantic_enabled=self.semantic_enabled,
            perturb_rot_deg=self.perturb_rot_deg,
            perturb_trans_frac=self.perturb_trans_frac,
            init_count=self.init_count,
            sh_degree=self.sh_degree,
            seed=self.seed,
        )

    def fit(self, views, cameras, scene_init: GaussianScene | None = None):
        """Optimize a scene from images (list of HxWx3 in [0,1]) and cameras."""
        paired = check_posed_views(views, cameras)
        cfg = self._config()
        if scene_init is None:
            rng = np.random.default_rng(cfg.seed)
            scene_init = random_scene(
                [c for _, c in paired], cfg.init_count, rng, sh_degree=cfg.sh_degree
            )
        self.scene_, self.log_ = train(scene_init, paired, self.bank, cfg)
        return self

    def predict(self, cameras) -> list[np.ndarray]:
        """Render the fitted scene from each camera."""
        self._check_fitted()
        return [rasterize(self.scene_, check_camera(c)).image for c in cameras]

    def score(self, views, cameras) -> float:
        """Mean PSNR of renders against held-out ground-truth views."""
        paired = check_posed_views(views, cameras)
        renders = self.predict([c for _, c in paired])
        return float(np.mean([psnr(r, gt) for r, (gt, _) in zip(renders, paired)]))

    def _check_fitted(self):
        if not hasattr(self, "scene_"):
            raise InvalidInputError("estimator is not fitted; call fit() first")
