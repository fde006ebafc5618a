#!/usr/bin/env python3
"""Wire-protocol scorer child backed by a lexical model file.

Usage: lexicon_scorer.py MODEL_FILE

Serves sentence and token log-probabilities over stdio so tests can
check that an external scorer reproduces the builtin backend exactly.
"""

import json
import sys

from alignkit.core import Token
from alignkit.ibm import load_model, sentence_logprob


def main() -> int:
    model = load_model(sys.argv[1])
    print(
        json.dumps(
            {"alignkit_scorer": 1, "supports": ["sentence_logprob", "token_logprobs"]}
        ),
        flush=True,
    )
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        request = json.loads(line)
        try:
            src = tuple(Token(w) for w in request["src"])
            tgt = tuple(Token(w) for w in request["tgt"])
            sentence, per_token = sentence_logprob(model, src, tgt)
            reply = {"id": request["id"]}
            need = request.get("need", [])
            if "sentence_logprob" in need:
                reply["sentence_logprob"] = sentence
            if "token_logprobs" in need:
                reply["token_logprobs"] = per_token
            if "attention" in need:
                raise ValueError("attention is not supported")
        except Exception as err:  # report, keep serving
            reply = {"id": request.get("id"), "error": str(err)}
        print(json.dumps(reply), flush=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
