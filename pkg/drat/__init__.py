"""
drat: 3D deformable transformer toolkit for action recognition at desk scale.
"""

VERSION = "1.0.0"
