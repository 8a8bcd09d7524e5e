"""Mining of question-code pairs from Stack Overflow style dumps.

The pipeline: parse accepted answer posts into alternating text/code block
sequences, filter "how-to" questions, classify each code block as a
standalone solution (recurrent models, feature-engineered baselines, and a
three-model agreement ensemble), and emit the mined pairs as a dataset.
"""

__version__ = "0.1.0"
