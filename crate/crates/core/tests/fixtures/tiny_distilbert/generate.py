"""Builds a tiny random DistilBERT classifier and reference outputs.

The reference tokenization and logits come from the `transformers`
implementation evaluated in float64, independently of the Rust code.
"""
import json
import pathlib

import torch
from transformers import BertTokenizer, DistilBertConfig, DistilBertForSequenceClassification

HERE = pathlib.Path(__file__).parent
MAX_TOKENS = 16

words = """i am so happy sad angry today this is the worst best day ever
love hate my phone broke again thanks for nothing great news wow what
a surprise calm down please refund want feel fear disgust scared
url user it was not good bad""".split()
pieces = ["##s", "##ing", "##ed", "##ly", "##er", "##est", "##n", "##t"]
letters = [chr(c) for c in range(ord("a"), ord("z") + 1)]
punct = list("!?.,'<>@#:/-")
vocab = ["[PAD]", "[unused0]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
for tok in punct + letters + ["##" + l for l in letters] + pieces + words:
    if tok not in vocab:
        vocab.append(tok)
(HERE / "vocab.txt").write_text("\n".join(vocab) + "\n")

torch.manual_seed(0)
config = DistilBertConfig(
    vocab_size=len(vocab),
    dim=32,
    n_layers=2,
    n_heads=4,
    hidden_dim=64,
    max_position_embeddings=64,
    num_labels=8,
)
model = DistilBertForSequenceClassification(config)
with torch.no_grad():
    for p in model.parameters():
        p.add_(0.3 * torch.randn_like(p))
model.eval()
model.save_pretrained(HERE, safe_serialization=True)

tok = BertTokenizer(str(HERE / "vocab.txt"), do_lower_case=True)
texts = [
    "i am so happy",
    "I AM SO HAPPY!!",
    "my phone broke again, thanks for nothing",
    "Café naïve déjà vu",
    "worstest happily scared feelings",
    "<url> <user> what a surprise",
    "zzqx unknownish tokens here",
    "this is the best day ever and i love it so much wow what great news today",
]
model = model.double()
cases = []
for text in texts:
    ids = tok(text, truncation=True, max_length=MAX_TOKENS)["input_ids"]
    with torch.no_grad():
        logits = model(input_ids=torch.tensor([ids])).logits[0].tolist()
    cases.append({"text": text, "ids": ids, "logits": logits})
(HERE / "expected.json").write_text(json.dumps({"max_tokens": MAX_TOKENS, "cases": cases}, indent=1) + "\n")
