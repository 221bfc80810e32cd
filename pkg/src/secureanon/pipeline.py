"""Disentangle -> transform -> reconstruct.

Images travel as (B, H, W) stacks. The identity encoder output is always unit
norm; the flow output is *not* renormalized so the inverse stays exact.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from . import numerics as nx
from .config import Config
from .flow import SifModel
from .keygen import KeyGen
from .numerics import Mlp, MlpSpec, ShapeError, Tensor
from .synthdata import smooth_decoder

# component name -> phase in which it is trained (None: never)
COMPONENTS = OrderedDict([
    ("e_id", 0),
    ("e_attr", 1),
    ("mapping", 1),
    ("generator", None),
    ("icl", 2),
    ("sif", 2),
    ("pose", None),
    ("parse", None),
    ("percep", None),
])


class PipelineModel:
    """All networks of the anonymizer plus the frozen loss proxies."""

    def __init__(self, cfg: Config, nets: dict[str, Mlp], sif: SifModel, keygen: KeyGen):
        self.cfg = cfg
        self.nets = nets
        self.sif = sif
        self.keygen = keygen
        self.phase = -1

    # ------------------------------------------------------------------ build
    @classmethod
    def build(cls, cfg: Config) -> "PipelineModel":
        d, n, s = cfg.dims, cfg.nets, cfg.seeds
        dtype = nx.as_dtype(cfg.precision)
        rng = nx.make_rng(s.model)
        pix = d.height * d.width
        nets: dict[str, Mlp] = {}
        nets["e_id"] = Mlp.init(MlpSpec((pix, n.id_hidden, n.id_hidden, d.d_z)), rng, dtype, name="e_id")
        nets["e_attr"] = Mlp.init(MlpSpec((pix, n.attr_hidden, d.m * d.d_w)), rng, dtype, name="e_attr")
        nets["mapping"] = Mlp.init(MlpSpec((d.d_z + d.d_w, n.map_hidden, d.d_w)), rng, dtype, name="mapping")
        icl = Mlp.init(MlpSpec((d.d_z, 2 * d.d_z, 2 * d.d_z, 2 * d.d_z, d.d_z)), rng, dtype, name="icl")
        icl.weights[-1].data = np.zeros_like(icl.weights[-1].data)
        nets["icl"] = icl
        nets["generator"] = smooth_decoder(d.m * d.d_w, n.gen_hidden, d.height, d.width, s.generator,
                                           "leaky_relu", coeff_scale=40.0, bias_scale=6.0, k=n.basis,
                                           dtype=dtype, name="generator")
        prng = nx.make_rng(s.proxies)
        nets["pose"] = Mlp.init(MlpSpec((pix, n.proxy_dim)), prng, dtype, gain=4.0, trainable=False, name="pose")
        nets["parse"] = Mlp.init(MlpSpec((pix, 64, n.proxy_dim), hidden_activation="tanh"), prng, dtype,
                                 gain=4.0, trainable=False, name="parse")
        nets["percep"] = Mlp.init(MlpSpec((pix, n.percep_hidden, n.percep_dim), hidden_activation="tanh",
                                          output_activation="tanh"), prng, dtype, gain=4.0, trainable=False,
                                  name="percep")
        for p in (nets["parse"], nets["percep"]):
            p.biases[0].data = (prng.standard_normal(p.biases[0].shape) * 0.5).astype(dtype)
        sif = SifModel.init(d.d_z, d.d_k, cfg.flow.n_blocks, cfg.flow.clamp, cfg.flow.d_hidden or None,
                            rng=rng, dtype=dtype, out_gain=cfg.flow.out_gain, scale_bias=cfg.flow.scale_bias)
        keygen = KeyGen(d.d_k, s.keymap, dtype)
        model = cls(cfg, nets, sif, keygen)
        model.set_phase(0)
        return model

    # ------------------------------------------------------------- parameters
    def component_params(self, name: str) -> list[Tensor]:
        return self.sif.params() if name == "sif" else self.nets[name].params()

    def named_params(self) -> list[tuple[str, str, Tensor]]:
        """(component, name, tensor) in a fixed order."""
        out = []
        for comp in COMPONENTS:
            pairs = self.sif.named_params() if comp == "sif" else self.nets[comp].named_params()
            out += [(comp, name, t) for name, t in pairs]
        return out

    def set_trainable(self, components) -> None:
        components = set(components)
        for comp in COMPONENTS:
            flag = comp in components
            if comp == "sif":
                self.sif.set_trainable(flag)
            else:
                self.nets[comp].trainable = flag

    def set_phase(self, phase: int, joint: bool = False) -> None:
        """Freeze everything except what ``phase`` trains; ``joint`` merges phases I and II."""
        if joint:
            train = {"e_attr", "mapping", "icl", "sif"}
        else:
            train = {c for c, p in COMPONENTS.items() if p == phase}
        self.set_trainable(train)
        self.phase = phase

    def trainable_params(self) -> list[Tensor]:
        return [t for _, _, t in self.named_params() if t.requires_grad]

    def astype(self, dtype) -> "PipelineModel":
        nets = {k: v.astype(dtype) for k, v in self.nets.items()}
        out = PipelineModel(self.cfg, nets, self.sif.astype(dtype), self.keygen.astype(dtype))
        out.phase = self.phase
        return out

    # ---------------------------------------------------------------- modules
    def _flat(self, x) -> Tensor:
        x = nx.tensor(x)
        d = self.cfg.dims
        if x.shape[-2:] != (d.height, d.width):
            raise ShapeError(f"expected {d.height}x{d.width} images, got {x.shape}")
        return nx.reshape(x, x.shape[:-2] + (d.height * d.width,))

    def e_id(self, x) -> Tensor:
        return nx.normalize(self.nets["e_id"](self._flat(x)))

    def e_attr(self, x) -> Tensor:
        d = self.cfg.dims
        a = self.nets["e_attr"](self._flat(x))
        return nx.reshape(a, a.shape[:-1] + (d.m, d.d_w))

    def mapping_m(self, z, a) -> Tensor:
        """Replicate z over the style slots, concatenate with a, shared per-slot MLP."""
        z, a = nx.tensor(z), nx.tensor(a)
        d = self.cfg.dims
        if z.shape[-1] != d.d_z or a.shape[-2:] != (d.m, d.d_w) or z.shape[:-1] != a.shape[:-2]:
            raise ShapeError(f"mapping expects z (..,{d.d_z}) and a (..,{d.m},{d.d_w}); got {z.shape}, {a.shape}")
        zr = nx.broadcast_to(nx.reshape(z, z.shape[:-1] + (1, d.d_z)), z.shape[:-1] + (d.m, d.d_z))
        return self.nets["mapping"](nx.concat([zr, a], axis=-1))

    def generator_g(self, w) -> Tensor:
        w = nx.tensor(w)
        d = self.cfg.dims
        if w.shape[-2:] != (d.m, d.d_w):
            raise ShapeError(f"latent code must be (..,{d.m},{d.d_w}), got {w.shape}")
        img = self.nets["generator"](nx.reshape(w, w.shape[:-2] + (d.m * d.d_w,)))
        return nx.reshape(img, img.shape[:-1] + (d.height, d.width))

    def icl(self, z) -> Tensor:
        z = nx.tensor(z)
        if z.shape[-1] != self.cfg.dims.d_z:
            raise ShapeError(f"ICL expects length {self.cfg.dims.d_z}, got {z.shape[-1]}")
        return z + self.nets["icl"](z)

    def pose(self, x) -> Tensor:
        return self.nets["pose"](self._flat(x))

    def parse(self, x) -> Tensor:
        return self.nets["parse"](self._flat(x))

    def percep(self, x) -> Tensor:
        return self.nets["percep"](self._flat(x))

    # ------------------------------------------------------------ composites
    def reconstruct(self, x) -> Tensor:
        return self.generator_g(self.mapping_m(self.e_id(x), self.e_attr(x)))

    def anonymize_k(self, x, k, bypass: bool = False) -> Tensor:
        z = self.e_id(x)
        zt = z if bypass else self.sif.forward(z, k)
        return self.generator_g(self.mapping_m(zt, self.e_attr(x)))

    def deanonymize_k(self, x_anon, k, use_icl: bool = True) -> Tensor:
        z = self.e_id(x_anon)
        if use_icl:
            z = self.icl(z)
        return self.generator_g(self.mapping_m(self.sif.inverse(z, k), self.e_attr(x_anon)))

    def keys(self, secrets) -> np.ndarray:
        return self.keygen.many(list(secrets))


def _images(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    return (x[None], True) if x.ndim == 2 else (x, False)


def _run(model: PipelineModel, x, fn):
    arr, single = _images(x)
    out = fn(arr.astype(nx.as_dtype(model.cfg.precision))).data
    return out[0] if single else out


def e_id(model: PipelineModel, x) -> np.ndarray:
    return _run(model, x, model.e_id)


def e_attr(model: PipelineModel, x) -> np.ndarray:
    return _run(model, x, model.e_attr)


def reconstruct(model: PipelineModel, x) -> np.ndarray:
    return _run(model, x, model.reconstruct)


def anonymize(model: PipelineModel, x, secret, bypass: bool = False) -> np.ndarray:
    """Eq.-style composition G(M(T(E_ID(X), s), E_Attr(X))) for one secret."""
    k = model.keygen(secret)
    return _run(model, x, lambda t: model.anonymize_k(t, k, bypass=bypass))


def deanonymize(model: PipelineModel, x_anon, secret) -> np.ndarray:
    k = model.keygen(secret)
    use_icl = not model.cfg.ablation.no_icl
    return _run(model, x_anon, lambda t: model.deanonymize_k(t, k, use_icl=use_icl))


def blend(xg, x, mask) -> np.ndarray:
    """mask * generated + (1 - mask) * original, elementwise."""
    xg, x, mask = np.asarray(xg), np.asarray(x), np.asarray(mask)
    if xg.shape != x.shape or mask.shape != x.shape[-mask.ndim:] or mask.ndim > x.ndim:
        raise ShapeError(f"blend shapes differ: {xg.shape}, {x.shape}, mask {mask.shape}")
    if mask.min() < 0 or mask.max() > 1:
        raise nx.ContractError("mask values must lie in [0, 1]")
    return mask * xg + (1.0 - mask) * x
