"""MCMC engines: the reversible-jump mixture sampler and the network baseline."""

from .chain import Chain, read_chain, write_chain
from .config import FULL_SCALE, McmcConfig
from .mixture import MixtureSampler, SplitProposal, fit_mixture
from .network import NetworkSampler, fit_network_model

__all__ = ["Chain", "read_chain", "write_chain", "FULL_SCALE", "McmcConfig",
           "MixtureSampler", "SplitProposal", "fit_mixture", "NetworkSampler",
           "fit_network_model"]
