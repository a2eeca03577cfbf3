import os
import json
import logging
from pathlib import Path
from dataclasses import dataclass, fields, replace

LOGGER = logging.getLogger('markov_states')

PROFILES_FILEPATH = Path(__file__).with_name('tolerances.json')
PROFILE_ENV_VAR = 'MARKOV_STATES_TOLERANCES'

@dataclass(frozen=True)
class Tolerances:
    """Every numerical threshold used by the library, in one record"""
    hermitian: float = 1e-12
    commutator: float = 1e-10 # simultaneous diagonalization input check
    degeneracy_gap: float = 1e-9
    positivity: float = 1e-10
    log_positivity: float = 1e-14
    gram: float = 1e-12
    projection: float = 1e-12
    structural: float = 1e-12 # commutation of assembled segment terms
    agreement: float = 1e-10
    kms: float = 1e-9
    modular: float = 1e-10
    markov_property: float = 1e-10
    round_trip: float = 1e-12
    dedup: float = 1e-11
    rationality: float = 1e-9
    max_denominator: int = 64
    tracial: float = 1e-12
    stochastic: float = 1e-12
    dense_dim_limit: int = 4096
    stabilization_windows: int = 3
    exhaustive_event_limit: int = 2**12
    sampled_event_pairs: int = 100

    def overridden(self, overrides: dict) -> 'Tolerances':
        """Returns a copy with the given fields replaced, rejecting unknown names"""
        known = {f.name: f.type for f in fields(self)}
        for name in overrides:
            if name not in known:
                raise ValueError(f'Unknown tolerance field: {name}')
        cast = {name: (int(value) if isinstance(getattr(self, name), int) else float(value)) for name, value in overrides.items()}
        return replace(self, **cast)

def load_profiles(path: Path | str = PROFILES_FILEPATH) -> dict[str, Tolerances]:
    """Reads named tolerance profiles, each a partial override of the defaults"""
    with open(path, 'r') as f:
        data = json.load(f)
    try:
        raw_profiles = data['profiles']
    except KeyError as e:
        raise ValueError(f'Missing expected key in tolerance profiles: {e}')
    profiles = {'default': Tolerances()}
    for name, overrides in raw_profiles.items():
        profiles[name] = Tolerances().overridden(overrides)
    return profiles

_ACTIVE = Tolerances()

def current() -> Tolerances:
    """Active tolerance record"""
    return _ACTIVE

def use(tol: Tolerances) -> None:
    """Installs a tolerance record as the process-wide default"""
    global _ACTIVE
    _ACTIVE = tol

def use_profile(name: str, path: Path | str = PROFILES_FILEPATH) -> Tolerances:
    """Activates a named profile from the profiles file"""
    profiles = load_profiles(path)
    if name not in profiles:
        raise ValueError(f'Unknown tolerance profile {name!r}, expected one of {sorted(profiles)}')
    use(profiles[name])
    LOGGER.debug(f'Activated tolerance profile {name}')
    return profiles[name]

def resolve(tol: Tolerances | None) -> Tolerances:
    return tol if tol is not None else _ACTIVE

if _env_profile := os.environ.get(PROFILE_ENV_VAR):
    try:
        use_profile(_env_profile)
    except (OSError, ValueError) as e:
        LOGGER.critical(f'Could not activate tolerance profile {_env_profile!r} from {PROFILE_ENV_VAR}: {e}')
