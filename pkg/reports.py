import json
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from exact import ExactLog

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

def jsonable(value):
    """Plain JSON value for numpy data, complex numbers and exact scalars"""
    match value:
        case dict():
            return {str(k): jsonable(v) for k, v in value.items()}
        case list() | tuple():
            return [jsonable(v) for v in value]
        case np.ndarray():
            return jsonable(value.tolist())
        case bool() | None | str() | int():
            return value
        case complex() | np.complexfloating():
            return [float(value.real), float(value.imag)]
        case np.integer():
            return int(value)
        case float() | np.floating():
            return float(value)
        case Fraction() | ExactLog():
            return str(value)
        case _:
            return str(value)

@dataclass
class Check:
    value: float
    limit: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.limit)

@dataclass
class RunReport:
    command: str
    digest: str | None = None
    stages: dict[str, dict] = field(default_factory=dict)
    checks: dict[str, Check] = field(default_factory=dict)
    timing: dict[str, float] | None = None
    invalid: bool = False

    def add(self, stage: str, result: dict) -> None:
        self.stages[stage] = result

    def check(self, name: str, value: float, limit: float) -> Check:
        """Records a deviation against its tolerance"""
        result = Check(float(value), float(limit))
        self.checks[name] = result
        return result

    def failures(self) -> list[str]:
        return [name for name, c in self.checks.items() if not c.passed]

    def exit_code(self) -> int:
        if self.invalid:
            return EXIT_VALIDATION
        if self.failures():
            return EXIT_NUMERICAL
        return EXIT_OK

    def to_dict(self) -> dict:
        data = {'command': self.command, 'input_digest': self.digest, 'stages': jsonable(self.stages)}
        data['checks'] = {name: {'value': c.value, 'limit': c.limit, 'passed': c.passed} for name, c in self.checks.items()}
        data['exit_code'] = self.exit_code()
        if self.timing is not None:
            data['timing'] = {k: round(v, 6) for k, v in self.timing.items()}
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + '\n'

    def summary(self) -> list[str]:
        lines = [_format_line(self.command, 'INVALID' if self.invalid else 'DONE', f'exit code {self.exit_code()}')]
        for name, c in self.checks.items():
            lines.append(check_line(name, c))
        for stage, result in self.stages.items():
            if 'verdict' in result:
                lines.append(verdict_line(result))
        return lines

def _format_line(stage: str, status: str, detail: str) -> str:
    """Template for one human-readable summary line"""
    return f'{stage:<28} {status:<8} {detail}'

def check_line(name: str, c: Check) -> str: return _format_line(name, 'PASS' if c.passed else 'FAIL', f'{c.value:.3e} (limit {c.limit:.1e})')

def violation_line(path: str, message: str) -> str: return _format_line('validation', 'ERROR', f'{path}: {message}')

def error_line(message: str) -> str: return _format_line('error', 'FATAL', message)

def verdict_line(result: dict) -> str:
    match result['verdict']:
        case 'tracial':
            return _format_line('classification', 'TRACIAL', 'outside the type III analysis')
        case 'III_lambda_candidate':
            lam = result.get('lambda_exact') or f"{result['lambda']:.12g}"
            stable = 'stabilized' if result['stabilized'] else 'not stabilized'
            return _format_line('classification', 'III_L', f'candidate lambda = {lam}, {stable} over {result["windows"]} windows')
        case _:
            return _format_line('classification', 'UNKNOWN', f'irrational witness {result["witness"]:.12g}')
