# gism configuration file
#
# Values set here override the scene file; command-line flags override both.
# Settings left as None fall back to the scene file.

# Path to the JSON scene description (required unless given with --scene)
c.scene_path =

# Directory that receives taps.csv, rir.csv, rir.wav and paths.jsonl
#c.out_dir = "."

# Seed for the randomized test suite (the simulation itself is deterministic)
#c.seed = 0

# Maximum number of planar reflections
#c.engine.max_order = None

# Maximum number of reflections in paths that touch a curved patch (0, 1 or 2;
# 0 disables the curved engine)
#c.engine.curved_max_order = None

# Lattice density M used to sample curved patches (samples at spacing 1/M in
# parameter space)
#c.engine.lattice_M = None

# Quadrature weight of each lattice sample: "spacing" (nearest-neighbor distance
# to the power p), "ball_volume" (volume of the p-ball with that radius) or
# "jacobian" (area element of the parametrization times 1/M^p)
#c.engine.weight_convention = "spacing"

# Collapse runs of lattice samples that converge to the same isolated reflection
# point into a single unit-weight image
#c.engine.merge_isolated = False

# Upper bound on the number of patch/patch sample pairs searched for second-order
# curved paths
#c.engine.max_pair_candidates = 4000000

# Worker threads for path enumeration; results do not depend on this value
#c.engine.threads = 1

# Output sample rate in Hz
#c.render.fs = None

# Output duration in seconds (None to fit every tap)
#c.render.duration = None

# "impulse" (or None) for a unit impulse, otherwise a WAV file convolved with the response
#c.render.excitation = None

# Fractional delay handling: "nearest" sample or Hann-windowed "sinc"
#c.render.interpolation = "nearest"

# Half width of the windowed sinc kernel, in samples
#c.render.sinc_half_width = 32

# Signal files to write: any of "csv", "wav"
#c.render.formats = None

# Angle-dependent absorption.  Maps a boundary element id to a callable that
# receives the element and the incidence angle in radians (0 is normal
# incidence) and returns the retained amplitude factor in [0, 1], replacing
# the element's constant absorption.
#
# import math
# c.absorption_hooks[0] = lambda element, angle: element.absorption * math.cos(angle)
