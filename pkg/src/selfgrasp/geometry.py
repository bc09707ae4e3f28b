"""Grasp-angle arithmetic.

Angle classes are the integers 0..17, each standing for a gripper angle of
``10 * index`` degrees. The motor command is the normalized value the robot
driver expects, ``((deg - 90) / 90) * 0.25``.
"""

import math

N_CLASSES = 18
CLASS_STEP_DEG = 10
GRIP = 0.5
MOTOR_LIMIT = 0.25


class GeometryError(ValueError):
    pass


def check_class(c):
    if isinstance(c, bool) or int(c) != c or not 0 <= c < N_CLASSES:
        raise GeometryError(f"angle class must be an integer in [0, {N_CLASSES - 1}], got {c!r}")
    return int(c)


def class_to_degrees(c):
    return float(check_class(c) * CLASS_STEP_DEG)


def degrees_to_motor(deg):
    """Map a gripper angle in [0, 180] degrees to motor units in [-0.25, 0.25].

    Evaluated in the same three steps as the robot-side driver so the
    floating point result matches it bit for bit.
    """
    if not (0.0 <= deg <= 180.0):
        raise GeometryError(f"degrees must lie in [0, 180], got {deg!r}")
    angle = deg - 90
    angle = angle / 90
    angle = angle * MOTOR_LIMIT
    return angle


def motor_to_degrees(m):
    if not (-MOTOR_LIMIT <= m <= MOTOR_LIMIT):
        raise GeometryError(f"motor value must lie in [-0.25, 0.25], got {m!r}")
    return (m / MOTOR_LIMIT) * 90 + 90


def class_to_motor(c):
    return degrees_to_motor(class_to_degrees(c))


def angular_distance_180(a, b):
    """Distance between two grasp angles on the 180-degree periodic circle."""
    d = math.fmod(abs(a - b), 180.0)
    return min(d, 180.0 - d)


def nearest_class(deg):
    """Class whose angle is closest to ``deg`` (mod 180); ties go to the lower index."""
    best, best_d = 0, math.inf
    for c in range(N_CLASSES):
        d = angular_distance_180(deg, c * CLASS_STEP_DEG)
        if d < best_d:
            best, best_d = c, d
    return best
