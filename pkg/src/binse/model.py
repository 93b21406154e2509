"""Two-stage binaural-mapping speech enhancement network.

Stage 1 maps the monaural noisy spectrogram into a virtual binaural space:
two parallel streams (left/right) of mapping blocks, each predicting a
sigmoid gate over the real/imag planes supervised by rendered binaural
targets. Stage 2 fuses the per-block features of both streams
(cross-attention + fusion modules) and runs an encoder-decoder denoiser
whose output gate produces the enhanced spectrogram.

Feature maps are (batch, channels, time, freq) throughout; spectrograms are
(batch, 2, time, freq) with plane 0 = real, plane 1 = imag.
"""

import math
from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .dsp import StftConfig
from .errors import InvalidConfigError, InvalidInputError

MB_CONV_MODES = ("multi", "single_d1", "single_d4")
BOTTLENECK_KINDS = ("ctfa", "plain_self_attention")


@dataclass
class ModelConfig:
    """Architecture hyperparameters, including the ablation switches."""

    n_ssm_pairs: int = 3
    n_render_blocks: int = 3
    base_channels: int = 16
    mb_kernel: tuple = (3, 3)
    mb_dilations: tuple = (1, 2, 4)
    bsd_encoder_channels: tuple = (32, 64, 128)
    n_ctfa: int = 2
    ctfa_hidden: int = 64
    mb_conv_mode: str = "multi"
    bottleneck: str = "ctfa"
    use_cross_attention: bool = True
    use_ifm: bool = True

    def __post_init__(self):
        self.mb_kernel = tuple(self.mb_kernel)
        self.mb_dilations = tuple(self.mb_dilations)
        self.bsd_encoder_channels = tuple(self.bsd_encoder_channels)
        if self.n_ssm_pairs < 1:
            raise InvalidConfigError("need at least one mapping block pair")
        if min(self.base_channels, self.n_render_blocks, self.n_ctfa, self.ctfa_hidden) < 1:
            raise InvalidConfigError("channel counts and block counts must be >= 1")
        if any(d <= 0 for d in self.mb_dilations):
            raise InvalidConfigError("dilations must be strictly positive")
        if any(c < 1 for c in self.bsd_encoder_channels):
            raise InvalidConfigError("encoder channel counts must be >= 1")
        if self.mb_conv_mode not in MB_CONV_MODES:
            raise InvalidConfigError(f"unknown mb_conv_mode: {self.mb_conv_mode}")
        if self.bottleneck not in BOTTLENECK_KINDS:
            raise InvalidConfigError(f"unknown bottleneck kind: {self.bottleneck}")

    @classmethod
    def micro(cls, **overrides):
        """Tiny configuration for gradient checks and fast tests."""
        kw = dict(
            n_ssm_pairs=2, n_render_blocks=1, base_channels=4,
            bsd_encoder_channels=(8, 8, 16), n_ctfa=1, ctfa_hidden=8,
        )
        kw.update(overrides)
        return cls(**kw)


class TorchStft(nn.Module):
    """Differentiable STFT/ISTFT matching binse.dsp exactly.

    Centered analysis with reflect padding of window_len//2 on each side,
    periodic Hann window zero-padded to fft_size, squared-window
    overlap-add normalization on synthesis.
    """

    def __init__(self, cfg: StftConfig | None = None):
        super().__init__()
        self.cfg = cfg or StftConfig()
        win = torch.hann_window(self.cfg.window_len, periodic=True, dtype=torch.float64)
        self.register_buffer("win", win)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, N) waveform -> (B, 2, T, F) real/imag spectrogram."""
        cfg = self.cfg
        n = x.shape[-1]
        pad = cfg.window_len // 2
        xp = F.pad(x, (pad, pad), mode="reflect")
        frames = xp.unfold(-1, cfg.window_len, cfg.hop)[:, : cfg.n_frames(n)]
        frames = frames * self.win.to(x.dtype)
        spec = torch.fft.rfft(frames, n=cfg.fft_size, dim=-1)
        return torch.stack([spec.real, spec.imag], dim=1)

    def inverse(self, s: torch.Tensor, source_len: int) -> torch.Tensor:
        """(B, 2, T, F) spectrogram -> (B, source_len) waveform."""
        cfg = self.cfg
        win = self.win.to(s.dtype)
        z = torch.complex(s[:, 0], s[:, 1])
        frames = torch.fft.irfft(z, n=cfg.fft_size, dim=-1)[..., : cfg.window_len]
        frames = frames * win
        n_frames = frames.shape[1]
        total = (n_frames - 1) * cfg.hop + cfg.window_len
        out = F.fold(
            frames.transpose(1, 2),
            output_size=(total, 1),
            kernel_size=(cfg.window_len, 1),
            stride=(cfg.hop, 1),
        )[:, 0, :, 0]
        den = F.fold(
            (win**2).expand(n_frames, -1).T.unsqueeze(0),
            output_size=(total, 1),
            kernel_size=(cfg.window_len, 1),
            stride=(cfg.hop, 1),
        )[:, 0, :, 0]
        out = out / den.clamp_min(1e-12)
        pad = cfg.window_len // 2
        out = out[:, pad : pad + source_len]
        if out.shape[1] < source_len:
            out = F.pad(out, (0, source_len - out.shape[1]))
        return out


class ChannelAttention(nn.Module):
    """Global-pool channel gating: avgpool -> two 1-D convs -> sigmoid scale."""

    def __init__(self, channels: int, kernel: int = 3):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv1d(1, 1, kernel, padding=pad)
        self.conv2 = nn.Conv1d(1, 1, kernel, padding=pad)

    def forward(self, x):
        g = x.mean(dim=(2, 3)).unsqueeze(1)  # (B, 1, C)
        g = torch.sigmoid(self.conv2(F.elu(self.conv1(g))))
        return x * g.squeeze(1).unsqueeze(-1).unsqueeze(-1)


class MultiBranchConv(nn.Module):
    """Parallel dilated conv branches with per-branch channel attention.

    mode="multi": three branches at the configured dilations, outputs summed.
    mode="single_d1"/"single_d4": one plain conv branch, no attention.
    """

    def __init__(self, channels: int, cfg: ModelConfig):
        super().__init__()
        kh, kw = cfg.mb_kernel
        self.mode = cfg.mb_conv_mode
        if self.mode == "multi":
            dilations = cfg.mb_dilations
        else:
            dilations = (1,) if self.mode == "single_d1" else (4,)
        self.branches = nn.ModuleList(
            nn.Conv2d(channels, channels, (kh, kw), padding=(d * (kh // 2), d * (kw // 2)), dilation=d)
            for d in dilations
        )
        if self.mode == "multi":
            self.attn = nn.ModuleList(ChannelAttention(channels) for _ in dilations)
        else:
            self.attn = None

    def forward(self, x):
        if self.attn is None:
            return self.branches[0](x)
        return sum(a(b(x)) for b, a in zip(self.branches, self.attn))


class RenderBlock(nn.Module):
    """Multi-branch conv plus two conv-BN-ELU blocks, with a residual path."""

    def __init__(self, channels: int, cfg: ModelConfig):
        super().__init__()
        self.mb = MultiBranchConv(channels, cfg)
        self.post = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.BatchNorm2d(channels),
            nn.ELU(),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.BatchNorm2d(channels),
            nn.ELU(),
        )

    def forward(self, x):
        return x + self.post(self.mb(x))


class MappingBlock(nn.Module):
    """One supervised mapping block of the virtual-binaural stage.

    Predicts a (0,1) gate over the noisy real/imag planes, emits the gated
    spectrogram and its waveform, and produces the feature for the next block.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c = cfg.base_channels
        self.in_proj = nn.Conv2d(c, c, 1)
        self.renders = nn.Sequential(*[RenderBlock(c, cfg) for _ in range(cfg.n_render_blocks)])
        self.out_proj = nn.Conv2d(c, 2, 1)
        self.feat_conv1 = nn.Conv2d(2, c, 3, padding=1)
        self.feat_conv2 = nn.Conv2d(c, c, 3, padding=1)
        self.feat_norm = nn.GroupNorm(1, c)  # layer norm over (C, T, F)

    def forward(self, f, y_ri, stft: TorchStft, source_len: int):
        g = torch.sigmoid(self.out_proj(self.renders(self.in_proj(f))))
        y_pre = g * y_ri
        wave = stft.inverse(y_pre, source_len)
        f_next = F.elu(self.feat_norm(self.feat_conv2(self.feat_conv1(y_pre))))
        return g, y_pre, wave, f_next


class CrossAttention(nn.Module):
    """Gated fusion of one stream with its opposite-channel counterpart.

    mask = sigmoid(conv(tanh(conv(self)) * tanh(conv(other)))); the output is
    self * mask + self, so the elementwise gain stays within (1, 2).
    """

    def __init__(self, channels: int):
        super().__init__()
        self.proj_self = nn.Conv2d(channels, channels, 1)
        self.proj_other = nn.Conv2d(channels, channels, 1)
        self.proj_mask = nn.Conv2d(channels, channels, 1)

    def forward(self, f_self, f_other):
        if f_self.shape != f_other.shape:
            raise InvalidInputError("cross-attention inputs differ in shape")
        a = torch.tanh(self.proj_self(f_self))
        b = torch.tanh(self.proj_other(f_other))
        m = torch.sigmoid(self.proj_mask(a * b))
        return f_self * m + f_self


class FusionModule(nn.Module):
    """Aggregate per-block features: concat -> depthwise-separable conv -> channel attention."""

    def __init__(self, n_inputs: int, channels: int):
        super().__init__()
        c_in = (n_inputs + 1) * channels
        self.depthwise = nn.Conv2d(c_in, c_in, 3, padding=1, groups=c_in, bias=False)
        self.pointwise = nn.Conv2d(c_in, channels, 1)
        self.attn = ChannelAttention(channels)

    def forward(self, block_features, y_c):
        x = torch.cat(list(block_features) + [y_c], dim=1)
        return self.attn(self.pointwise(self.depthwise(x)))


class AxisAttention(nn.Module):
    """Self channel-time-frequency attention.

    Pools the input along each pair of axes into a sequence, builds one
    softmax attention map per axis from query/key projections, applies all
    three maps to a shared 1x1-conv value tensor, sums, and passes the result
    through a bidirectional-GRU feed-forward over time. Residual from input.
    """

    def __init__(self, channels: int, hidden: int):
        super().__init__()
        if channels % 2:
            raise InvalidConfigError("axis attention needs an even channel count")
        self.hidden = hidden
        self.q_proj = nn.ModuleDict({a: nn.Linear(1, hidden) for a in ("c", "t", "f")})
        self.k_proj = nn.ModuleDict({a: nn.Linear(1, hidden) for a in ("c", "t", "f")})
        self.v_proj = nn.Conv2d(channels, channels, 1)
        self.gru = nn.GRU(channels, channels // 2, batch_first=True, bidirectional=True)
        self.ffn = nn.Linear(channels, channels)

    def _attn_map(self, seq, axis):
        s = seq.unsqueeze(-1)  # (B, L, 1)
        q = self.q_proj[axis](s)
        k = self.k_proj[axis](s)
        scores = q @ k.transpose(1, 2) / math.sqrt(self.hidden)
        return torch.softmax(scores, dim=-1)

    def forward(self, x):
        b, c, t, f = x.shape
        m_c = self._attn_map(x.mean(dim=(2, 3)), "c")
        m_t = self._attn_map(x.mean(dim=(1, 3)), "t")
        m_f = self._attn_map(x.mean(dim=(1, 2)), "f")
        v = self.v_proj(x)
        att = (
            torch.einsum("bij,bjtf->bitf", m_c, v)
            + torch.einsum("bij,bcjf->bcif", m_t, v)
            + torch.einsum("bij,bctj->bcti", m_f, v)
        )
        seq = att.permute(0, 3, 2, 1).reshape(b * f, t, c)
        seq, _ = self.gru(seq)
        seq = self.ffn(seq)
        return x + seq.reshape(b, f, t, c).permute(0, 3, 2, 1)

    def attention_maps(self, x):
        """The three per-axis softmax maps, for inspection/testing."""
        return {
            "channel": self._attn_map(x.mean(dim=(2, 3)), "c"),
            "time": self._attn_map(x.mean(dim=(1, 3)), "t"),
            "freq": self._attn_map(x.mean(dim=(1, 2)), "f"),
        }


class PlainSelfAttention(nn.Module):
    """Single-head scaled dot-product attention over flattened time-frequency positions."""

    def __init__(self, channels: int, hidden: int):
        super().__init__()
        self.hidden = hidden
        self.q = nn.Conv2d(channels, hidden, 1)
        self.k = nn.Conv2d(channels, hidden, 1)
        self.v = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        b, c, t, f = x.shape
        q = self.q(x).reshape(b, self.hidden, t * f).transpose(1, 2)
        k = self.k(x).reshape(b, self.hidden, t * f)
        v = self.v(x).reshape(b, c, t * f).transpose(1, 2)
        att = torch.softmax(q @ k / math.sqrt(self.hidden), dim=-1)
        out = (att @ v).transpose(1, 2).reshape(b, c, t, f)
        return x + out


class DenoiseNet(nn.Module):
    """Encoder-decoder denoiser over the fused binaural features.

    Three frequency-downsampling (stride 2) encoder levels, an attention
    bottleneck, and mirrored transposed-conv decoder levels with channel-
    concatenation skips. Ends in a 1x1 conv + sigmoid gate on the RI planes.
    """

    def __init__(self, in_channels: int, cfg: ModelConfig):
        super().__init__()
        chans = cfg.bsd_encoder_channels
        self.encoders = nn.ModuleList()
        c_prev = in_channels
        for c_out in chans:
            self.encoders.append(
                nn.Sequential(
                    nn.Conv2d(c_prev, c_out, 3, stride=(1, 2), padding=1),
                    nn.BatchNorm2d(c_out),
                    nn.ELU(),
                    MultiBranchConv(c_out, cfg),
                )
            )
            c_prev = c_out
        if cfg.bottleneck == "ctfa":
            self.bottleneck = nn.Sequential(
                *[AxisAttention(chans[-1], cfg.ctfa_hidden) for _ in range(cfg.n_ctfa)]
            )
        else:
            self.bottleneck = nn.Sequential(
                *[PlainSelfAttention(chans[-1], cfg.ctfa_hidden) for _ in range(cfg.n_ctfa)]
            )
        dec_out = list(chans[:-1][::-1]) + [chans[0]]  # e.g. (32,64,128) -> [64, 32, 32]
        self.decoders = nn.ModuleList()
        c_cur = chans[-1]
        for skip_c, c_out in zip(chans[::-1], dec_out):
            self.decoders.append(
                nn.Sequential(
                    nn.ConvTranspose2d(c_cur + skip_c, c_out, 3, stride=(1, 2), padding=1),
                    nn.BatchNorm2d(c_out),
                    nn.ELU(),
                )
            )
            c_cur = c_out
        self.mask_conv = nn.Conv2d(dec_out[-1], 2, 1)

    def forward(self, fused, y_ri):
        x = fused
        skips, widths = [], []
        for enc in self.encoders:
            widths.append(x.shape[-1])
            x = enc(x)
            skips.append(x)
        x = self.bottleneck(x)
        for dec, skip, width in zip(self.decoders, skips[::-1], widths[::-1]):
            x = dec(torch.cat([x, skip], dim=1))
            # transposed conv overshoots odd widths and undershoots even ones
            x = x[..., :width]
            if x.shape[-1] < width:
                x = F.pad(x, (0, width - x.shape[-1]))
        mask = torch.sigmoid(self.mask_conv(x))
        return mask, mask * y_ri


class BinauralMappingEnhancer(nn.Module):
    """Full network: pre-encoder, left/right mapping streams, fusion, denoiser."""

    def __init__(self, cfg: ModelConfig | None = None, stft_cfg: StftConfig | None = None):
        super().__init__()
        self.cfg = cfg or ModelConfig()
        self.stft = TorchStft(stft_cfg)
        c = self.cfg.base_channels
        n = self.cfg.n_ssm_pairs
        self.pre_encoder = nn.Sequential(
            nn.Conv2d(2, c, 3, padding=1), nn.BatchNorm2d(c), nn.ELU(),
            nn.Conv2d(c, c, 3, padding=1), nn.BatchNorm2d(c), nn.ELU(),
        )
        self.map_left = nn.ModuleList(MappingBlock(self.cfg) for _ in range(n))
        self.map_right = nn.ModuleList(MappingBlock(self.cfg) for _ in range(n))
        if self.cfg.use_cross_attention:
            self.cross_left = nn.ModuleList(CrossAttention(c) for _ in range(n))
            self.cross_right = nn.ModuleList(CrossAttention(c) for _ in range(n))
        else:
            self.cross_left = self.cross_right = None
        if self.cfg.use_ifm:
            self.fuse_left = FusionModule(n, c)
            self.fuse_right = FusionModule(n, c)
        else:
            self.fuse_left = self.fuse_right = None
        self.denoiser = DenoiseNet(2 * c, self.cfg)

    def forward(self, y: torch.Tensor) -> dict:
        """(B, N) noisy waveform -> enhanced waveform plus per-block predictions."""
        if y.dim() != 2:
            raise InvalidInputError("expected a (batch, samples) waveform tensor")
        source_len = y.shape[1]
        y_ri = self.stft(y)
        y_c = self.pre_encoder(y_ri)
        feats_l, feats_r = [], []
        waves_l, waves_r = [], []
        f_l = f_r = y_c
        for block_l, block_r in zip(self.map_left, self.map_right):
            _, _, wave_l, f_l = block_l(f_l, y_ri, self.stft, source_len)
            _, _, wave_r, f_r = block_r(f_r, y_ri, self.stft, source_len)
            feats_l.append(f_l)
            feats_r.append(f_r)
            waves_l.append(wave_l)
            waves_r.append(wave_r)
        if self.cross_left is not None:
            crossed_l = [ca(a, b) for ca, a, b in zip(self.cross_left, feats_l, feats_r)]
            crossed_r = [ca(a, b) for ca, a, b in zip(self.cross_right, feats_r, feats_l)]
        else:
            crossed_l, crossed_r = feats_l, feats_r
        if self.fuse_left is not None:
            fused = torch.cat([self.fuse_left(crossed_l, y_c), self.fuse_right(crossed_r, y_c)], dim=1)
        else:
            fused = torch.cat([crossed_l[-1], crossed_r[-1]], dim=1)
        mask, enhanced = self.denoiser(fused, y_ri)
        s_pre = self.stft.inverse(enhanced, source_len)
        return {
            "s_pre": s_pre,
            "y_pre_left": waves_l,
            "y_pre_right": waves_r,
            "mask": mask,
            "enhanced_spec": enhanced,
        }


def build_model(cfg: ModelConfig | None = None, stft_cfg: StftConfig | None = None,
                seed: int | None = None) -> BinauralMappingEnhancer:
    """Construct a model, optionally with seeded parameter initialization."""
    if seed is not None:
        torch.manual_seed(seed)
    return BinauralMappingEnhancer(cfg, stft_cfg)


def param_count(cfg: ModelConfig, stft_cfg: StftConfig | None = None) -> int:
    """Exact learnable-scalar count for a configuration."""
    model = BinauralMappingEnhancer(cfg, stft_cfg)
    return sum(p.numel() for p in model.parameters())


def config_to_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)


def config_from_dict(d: dict) -> ModelConfig:
    return ModelConfig(**d)
