import numpy as np

from v2xalloc.channel import ChannelRealization, LinkSet


def fixture_channels(bs_gain, nbr_gain, n_nds):
    """Hand-built realization: gains given per link (rows) and RB (cols)."""
    bs = np.asarray(bs_gain, dtype=float)
    n_links = bs.shape[0]
    ls = LinkSet(
        subregion_id=1,
        nds_vehicles=np.arange(n_nds),
        ds_vehicles=np.arange(n_nds, n_links),
        bs_ls=np.ones(n_links),
        nbr_ids=[np.arange(np.asarray(g).shape[0]) for g in nbr_gain],
        nbr_ls=[np.ones(np.asarray(g).shape[0]) for g in nbr_gain],
    )
    return ChannelRealization(
        bs_gain=bs, nbr_gain=[np.asarray(g, dtype=float) for g in nbr_gain],
        link_set=ls)
