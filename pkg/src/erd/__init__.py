"""Educational resource discovery pipeline.

Subpackages cover the pipeline stages end to end: query generation
(querygen), web harvesting (harvest), document parsing (docmodel),
feature extraction (features), relevance scoring (relevance), the
decision-tree classifier (classifier) and evaluation/analysis
(evalanalysis). The erd command line drives them over a workspace
directory.
"""

__version__ = "0.1.0"
