"""
精確有理數運算的穩定性判定 (split desk models)

子層只在有限的候選目錄中搜尋：summand 的子和，加上 φ 生成的飽和線子層。
對 r <= 2 的 split model 這是精確的；r > 2 時只是不穩定性的下界。
"""
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

from src.core.errors import InvalidModel

logger = logging.getLogger(__name__)


def rational(value):
    """float 以十進位字串轉成精確有理數 (0.6 → 3/5)"""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def slope(deg, rank):
    if rank < 1:
        raise InvalidModel("rank 必須 >= 1", rank=rank)
    return Fraction(deg) / rank


def _text(value):
    return None if value is None else str(value)


@dataclass(frozen=True)
class SplitModel:
    summand_degrees: tuple
    phi_support: tuple
    phi_line_degree: int = 0
    genus_tag: str = 'elliptic'
    name: str = ''

    def __post_init__(self):
        degrees = tuple(int(d) for d in self.summand_degrees)
        support = tuple(sorted(set(int(i) for i in self.phi_support)))
        object.__setattr__(self, 'summand_degrees', degrees)
        object.__setattr__(self, 'phi_support', support)
        if not degrees:
            raise InvalidModel("summand_degrees 不可為空")
        if not support:
            raise InvalidModel("phi_support 不可為空", name=self.name)
        if support[0] < 0 or support[-1] >= len(degrees):
            raise InvalidModel("phi_support 超出 summand 範圍", phi_support=list(support))
        limit = min(degrees[i] for i in support)
        if self.phi_line_degree > limit:
            raise InvalidModel("φ-line 的 degree 不能超過其所在 summand 的 degree",
                               phi_line_degree=self.phi_line_degree, limit=limit)

    @property
    def rank(self):
        return len(self.summand_degrees)

    @property
    def degree(self):
        return sum(self.summand_degrees)

    def shifted(self, c):
        """E ⊗ (degree c 的線叢)"""
        return SplitModel(tuple(d + c for d in self.summand_degrees), self.phi_support,
                          self.phi_line_degree + c, self.genus_tag, self.name)

    def to_dict(self):
        return {'name': self.name, 'summand_degrees': list(self.summand_degrees),
                'phi_support': list(self.phi_support), 'phi_line_degree': self.phi_line_degree,
                'genus_tag': self.genus_tag}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data['summand_degrees']), tuple(data.get('phi_support', [0])),
                   int(data.get('phi_line_degree', 0)), data.get('genus_tag', 'elliptic'),
                   data.get('name', ''))


@dataclass(frozen=True)
class Candidate:
    description: str
    degree: int
    rank: int
    contains_phi: bool

    @property
    def slope(self):
        return slope(self.degree, self.rank)


def candidates(model):
    out = []
    for size in range(1, model.rank + 1):
        for subset in combinations(range(model.rank), size):
            out.append(Candidate(f"summands{list(subset)}",
                                 sum(model.summand_degrees[i] for i in subset), size,
                                 set(model.phi_support) <= set(subset)))
    out.append(Candidate('phi-line', model.phi_line_degree, 1, True))
    return out


@dataclass
class Verdict:
    stable: bool
    tau: Fraction
    boundary: bool = False
    witness: dict = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {'stable': self.stable, 'tau': _text(self.tau), 'boundary': self.boundary,
                'polystable_candidate': self.boundary, 'witness': self.witness,
                'notes': list(self.notes)}


def _conditions(model):
    """回傳 [(candidate, condition, 比較值)]：condition 1 要求 τ > 值，condition 2 要求 τ < 值"""
    checks = []
    for cand in candidates(model):
        checks.append((cand, 1, cand.slope))
        if cand.contains_phi and cand.rank < model.rank:
            checks.append((cand, 2, slope(model.degree - cand.degree, model.rank - cand.rank)))
    return checks


def pair_stable(model, tau):
    """
    τ-穩定：(1) 所有子層 μ(E′) < τ；(2) 所有包含 φ 的真子層 μ(E/E″) > τ
    """
    tau = rational(tau)
    boundary = False
    for cand, condition, value in _conditions(model):
        ok = value < tau if condition == 1 else value > tau
        if value == tau:
            boundary = True
        if not ok:
            lhs = cand.slope if condition == 1 else value
            witness = {
                'candidate': cand.description,
                'condition': condition,
                'lhs': _text(lhs),
                'rhs': _text(tau),
                'relation': '<' if condition == 1 else '>',
            }
            return Verdict(False, tau, boundary, witness)
    return Verdict(True, tau, boundary)


def triple_stable(model, deg_l, tau):
    """(E, L, φ) 的穩定性 = (E ⊗ L*, φ) 在參數 τ - deg L 下的 pair 穩定性"""
    deg_l = int(deg_l)
    verdict = pair_stable(model.shifted(-deg_l), rational(tau) - deg_l)
    verdict.tau = rational(tau)
    verdict.notes.append(f"shifted by deg L = {deg_l}")
    return verdict


@dataclass
class Interval:
    """開區間 (lower, upper)；upper 為 None 代表 +∞"""
    lower: Fraction
    upper: Fraction = None

    @property
    def empty(self):
        return self.upper is not None and self.lower >= self.upper

    def contains(self, tau):
        tau = rational(tau)
        return not self.empty and tau > self.lower and (self.upper is None or tau < self.upper)

    def shifted(self, c):
        return Interval(self.lower + c, None if self.upper is None else self.upper + c)

    def to_dict(self):
        return {'lower': _text(self.lower), 'upper': _text(self.upper) if self.upper is not None else 'inf',
                'empty': self.empty}

    def __str__(self):
        if self.empty:
            return '∅'
        return f"({self.lower}, {'∞' if self.upper is None else self.upper})"


def admissible_interval(model, deg_l=None):
    """穩定 τ 的集合：condition 1 的下界與 condition 2 的上界的交集"""
    shift = int(deg_l or 0)
    work = model.shifted(-shift) if shift else model
    lower, upper = None, None
    for _, condition, value in _conditions(work):
        if condition == 1:
            lower = value if lower is None else max(lower, value)
        else:
            upper = value if upper is None else min(upper, value)
    return Interval(lower, upper).shifted(shift)


# --- extension 的 α-穩定性 ---
@dataclass(frozen=True)
class ExtensionModel:
    """0 → E₁ → E → E₂ → 0；候選子 extension 為 (r₁′, d₁′, r₂′, d₂′)"""
    r1: int
    d1: int
    r2: int
    d2: int
    candidates: tuple = ()

    def __post_init__(self):
        whole = (self.r1, self.d1, self.r2, self.d2)
        sub = (self.r1, self.d1, 0, 0)
        cands = [tuple(int(v) for v in c) for c in self.candidates]
        for required in (sub, whole):
            if required not in cands:
                cands.append(required)
        for r1p, _, r2p, _ in cands:
            if not (0 <= r1p <= self.r1 and 0 <= r2p <= self.r2) or r1p + r2p < 1:
                raise InvalidModel("子 extension 的 rank 不合法", candidate=[r1p, r2p])
        object.__setattr__(self, 'candidates', tuple(cands))

    @property
    def whole(self):
        return (self.r1, self.d1, self.r2, self.d2)

    def to_dict(self):
        return {'r1': self.r1, 'd1': self.d1, 'r2': self.r2, 'd2': self.d2,
                'candidates': [list(c) for c in self.candidates]}


def alpha_slope(candidate, alpha):
    """μ_α(E′) = μ(E′) + α·rank E₂′ / rank E′"""
    r1p, d1p, r2p, d2p = candidate
    rank = r1p + r2p
    return slope(d1p + d2p, rank) + rational(alpha) * Fraction(r2p, rank)


def extension_alpha_stable(model, alpha):
    alpha = rational(alpha)
    total = alpha_slope(model.whole, alpha)
    notes = []
    if alpha > 0:
        logger.warning("⚠️ α = %s > 0，超出定理適用範圍 (仍照算)", alpha)
        notes.append('outside-theorem-scope')
    boundary = False
    for cand in model.candidates:
        if cand == model.whole:
            continue
        value = alpha_slope(cand, alpha)
        if value == total:
            boundary = True
        if not value < total:
            witness = {'candidate': list(cand), 'condition': 'alpha-slope',
                       'lhs': _text(value), 'rhs': _text(total), 'relation': '<'}
            return Verdict(False, alpha, boundary, witness, notes)
    return Verdict(True, alpha, boundary, None, notes)


# --- 線性約束 (精確) ---
def constraint_defect(kind, rank, deg_e, deg_l=0, first=0, second=0, r2=1):
    """
    左式 - 右式：
      parameters / t-tprime: r·first + second - (deg E + deg L)
      ff:                    r·first + second - (deg E - ½deg L)
      t1-t2:                 r·first + r2·second - deg E
    """
    first, second = rational(first), rational(second)
    if kind in ('parameters', 't-tprime'):
        return rank * first + second - (deg_e + deg_l)
    if kind == 'ff':
        return rank * first + second - (deg_e - Fraction(deg_l, 2))
    if kind == 't1-t2':
        return rank * first + r2 * second - deg_e
    raise InvalidModel(f"未知的約束 {kind}")


CATALOG = {
    'line': SplitModel((1,), (0,), 0, name='line'),
    'split-generic': SplitModel((1, 1), (0, 1), 0, name='split-generic'),
    'split-one-summand': SplitModel((1, 1), (0,), 1, name='split-one-summand'),
    'split-02-generic': SplitModel((0, 2), (0, 1), 0, name='split-02-generic'),
}
