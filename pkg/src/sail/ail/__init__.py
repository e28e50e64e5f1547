"""Adversarial imitation on encoded pairs, plus the imperfect-demonstration tools."""

from .discriminator import (
    LOGIT_CLAMP,
    Discriminator,
    discriminate,
    gail_disc_loss,
    mixup_disc_loss,
    mixup_term,
    reward,
    weighted_disc_loss,
)
from .iwil import ConfidenceClassifier, auc, beta_ratio, epsilon_ratio, iwil_risk, logistic_loss, train_classifier
from .mixup import GMMResult, MixupConfig, fit_gmm_1d, gmm_split, manifold_mixup, mixup_coefficient
from .update import MODES, ExpertSide, Featurizer, GailDiag, disc_reward, gail_update, split_encoder_params

twoiwil_risk = iwil_risk
