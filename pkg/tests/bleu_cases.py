"""Hand-crafted hypothesis/reference pairs for the BLEU oracle.

Each pair is scored as a one-sentence corpus.  ``HAND`` holds values worked
out by hand for a few of them.
"""

import math

PAIRS = [
    # identical
    ("the cat sat on the mat", "the cat sat on the mat"),
    # clipping: only one "the" counts, no bigram matches
    ("the the the the", "the cat sat down"),
    # short hypothesis, all n-grams correct: brevity penalty only
    ("the cat sat on the mat", "the cat sat on the mat today"),
    # long hypothesis: no brevity penalty
    ("the cat sat on the mat today and yesterday", "the cat sat on the mat today"),
    # equal length, one substitution in the middle
    ("a quick brown fox jumps over the lazy dog", "a quick brown cat jumps over the lazy dog"),
    # case sensitivity
    ("The Cat sat on the mat", "the cat sat on the mat"),
    # reordered halves
    ("on the mat the cat sat", "the cat sat on the mat"),
    # repeated 4-grams in hypothesis clipped by reference counts
    ("a b c d a b c d", "a b c d e f g h"),
    ("a b c d a b c d", "a b c d a b c d a b c d"),
    # punctuation tokens count like words
    ("hello , world ! how are you ?", "hello , world ! how are we ?"),
    # no overlap at all
    ("x y z w", "a b c d"),
    # hypothesis shorter than 4 tokens: no 4-grams, score 0
    ("the cat sat", "the cat sat"),
    # exactly four tokens
    ("one two three four", "one two three four"),
    ("one two three four", "one two three five"),
    # long shared prefix, different tail
    ("we will go to the market tomorrow morning early", "we will go to the market tomorrow night"),
    # doubled reference words partly matched
    ("it is what it is and it is", "it is what it is"),
    # BPE-free subword-looking tokens
    ("ko@@ ta ma ri", "ko@@ ta ma ri"),
    # numbers and mixed tokens
    ("in 2019 there were 42 talks in total", "in 2019 there were 41 talks in total"),
    # single-token hypothesis
    ("yes", "yes it is true"),
    # longer sentence with two substitutions
    ("the model reads the whole document before it translates each sentence",
     "the model reads the entire document before it translates every sentence"),
]

HAND = {
    0: 100.0,
    1: 0.0,
    # all precisions 1, BP = exp(1 - 7/6)
    2: 100.0 * math.exp(1.0 - 7.0 / 6.0),
    # every n-gram matches, BP = exp(1 - 12/8)
    8: 100.0 * math.exp(-0.5),
    # p4 = 0/1 -> a zero precision
    13: 0.0,
    10: 0.0,
    11: 0.0,
}
