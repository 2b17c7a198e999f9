"""Toolkit for building and evaluating proactive streaming task assistants.

Submodules:
    corpus       -- domain types, session/prediction persistence, validation
    description  -- timestamped video description parser and printer
    assignment   -- sparse rectangular linear assignment (JV shortest augmenting path)
    embedding    -- text embedding providers (local hashed BOW, remote client)
    matching     -- temporal-semantic matching metric (precision / recall / F1)
    quality      -- dialogue quality scoring, train filtering, eval splitting
    backends     -- chat completion backends with retry
    judge        -- LLM rubric scoring of predicted assistant streams
    synthesis    -- dialogue synthesis pipeline from annotated videos
    streamtools  -- frame sampling masks, context chunking, token budgets
    thresholds   -- speak/silent threshold application and sweeps
    cli          -- command line entry points
"""

__version__ = "0.1.0"
