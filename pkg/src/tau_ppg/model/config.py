"""Architecture hyperparameters and the named presets / ablation variants."""

from dataclasses import asdict, dataclass, replace


@dataclass(frozen=True)
class TauConfig:
    """Hyperparameters of the temporal-attentive U-Net.

    ``lite`` switches every double convolution (and the upsample layers'
    convolution pair) to a single convolution, removes decoder attention and
    skips the bottleneck's channel doubling.  ``time_module``,
    ``decoder_attention`` and ``hard_labels`` exist for the ablation variants.
    """

    depth: int = 4
    in_channels: int = 1
    first_width: int = 8
    embed_dim: int = 16
    k_closest: int = 6
    kernel: int = 9
    heads: int = 2
    threshold: float = 7.5
    phase_vocab: int = 128
    lite: bool = False
    time_module: bool = True
    decoder_attention: bool = True
    hard_labels: bool = False
    hard_radius: int = 2

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")
        if self.phase_vocab < 2:
            raise ValueError("phase_vocab must be >= 2")
        if self.in_channels < 1 or self.first_width < 1 or self.k_closest < 1:
            raise ValueError("channel counts and k must be positive")
        if self.use_decoder_attention:
            for c in self.decoder_in_channels:
                if c % self.heads:
                    raise ValueError(f"decoder width {c} not divisible by {self.heads} heads")

    # -- derived channel plan ------------------------------------------------

    @property
    def use_decoder_attention(self):
        return self.decoder_attention and not self.lite

    @property
    def encoder_widths(self):
        return [self.first_width * 2 ** b for b in range(self.depth)]

    @property
    def bottleneck_width(self):
        last = self.encoder_widths[-1]
        return last if self.lite else 2 * last

    @property
    def decoder_in_channels(self):
        chans = [self.bottleneck_width]
        for _ in range(self.depth - 1):
            chans.append(max(1, chans[-1] // 2))
        return chans

    @property
    def decoder_out_channels(self):
        return [max(1, c // 2) for c in self.decoder_in_channels]

    @property
    def output_widths(self):
        last = self.encoder_widths[-1]
        return [last, max(1, last // 2)]

    @property
    def min_length(self):
        return 2 ** self.depth

    def to_dict(self):
        return asdict(self)


TAU = TauConfig()
TAU_LITE = TauConfig(depth=3, first_width=4, kernel=7, embed_dim=4, lite=True)
# desk-scale full architecture (double convs + attention) used for ablations
TAU_SMALL = TauConfig(depth=3, first_width=4, kernel=7, embed_dim=4)

PRESETS = {"tau": TAU, "lite": TAU_LITE, "small": TAU_SMALL}


def variant(base, name):
    """Ablation variants as pure config changes of ``base``."""
    table = {
        "tau": dict(time_module=True, decoder_attention=True, hard_labels=False),
        "tau_b": dict(time_module=False, decoder_attention=False, hard_labels=True),
        "tau_b_att": dict(time_module=False, decoder_attention=True, hard_labels=True),
        "tau_b_att_dt": dict(time_module=False, decoder_attention=True, hard_labels=False),
    }
    if name not in table:
        raise KeyError(f"unknown variant {name!r}; choose from {sorted(table)}")
    return replace(base, **table[name])


def from_preset(name, **overrides):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)
