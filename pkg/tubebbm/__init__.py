"""
Contains Python code for simulating branching Brownian motion confined to a tube around a moving
path, and for checking the simulated growth against deterministic predictions. Code within this
package has no dependency on the experiment scripts, and may be used on its own.
"""
