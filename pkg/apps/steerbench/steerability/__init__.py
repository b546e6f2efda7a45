"""
Steerability harness: measures how well a language model moves a text to a requested
point in a multi-dimensional goal-space.
"""
