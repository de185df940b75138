"""packmap: desk-scale multi-robot 2D lidar SLAM sandbox.

Simulated velocity-driven quadrupeds with a servo-level gait layer, noisy
lidar/IMU/odometry, particle-filter and pose-graph SLAM backends, n-map
feature merging, and a topic pub/sub hub with a web teleop console.
"""

__version__ = "0.1.0"

from packmap.se2 import Pose2, Twist2, compose_se2, wrap_angle

__all__ = ["Pose2", "Twist2", "compose_se2", "wrap_angle", "__version__"]
