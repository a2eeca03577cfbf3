from fractions import Fraction

def best_rational(x: float, max_denominator: int, eps: float) -> Fraction | None:
    """Continued-fraction best approximation with bounded denominator, None if it misses x by more than eps"""
    candidate = Fraction(x).limit_denominator(max_denominator)
    if abs(x - float(candidate)) <= eps:
        return candidate
    return None
