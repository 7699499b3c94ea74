"""Transformers-backed model backends (optional heavyweight path).

Imported lazily and only when a model id uses the `hf:` scheme; these
need downloaded checkpoints and the `hf` extra installed. Interfaces
mirror the toy backends so the app layer does not care which is loaded.
"""
from __future__ import annotations

from .config import ServerConfig
from .toy import DecodingParams


def _require_torch():
    try:
        import torch  # noqa: F401
        import transformers  # noqa: F401
    except ImportError as exc:  # pragma: no cover - environment dependent
        raise RuntimeError(
            "hf: model ids need the 'hf' extra (torch + transformers) installed"
        ) from exc


class HfEmbedder:
    """Mean-pooled encoder embeddings, unit-normalized."""

    def __init__(self, checkpoint: str, config: ServerConfig) -> None:
        _require_torch()
        import torch
        from transformers import AutoModel, AutoTokenizer

        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self.model = AutoModel.from_pretrained(checkpoint).to(config.device).eval()
        self.device = config.device
        self.max_input_tokens = config.max_input_tokens
        with torch.no_grad():
            probe = self._forward(["probe"])
        self.dim = probe.shape[1]

    def _forward(self, texts: list[str]):
        import torch

        batch = self.tokenizer(
            texts,
            padding=True,
            truncation=True,
            max_length=self.max_input_tokens,
            return_tensors="pt",
        ).to(self.device)
        with torch.no_grad():
            hidden = self.model(**batch).last_hidden_state
        mask = batch["attention_mask"].unsqueeze(-1)
        pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
        return torch.nn.functional.normalize(pooled, dim=1).cpu()

    def encode(self, texts: list[str]):
        lengths = [len(self.tokenizer.tokenize(t)) for t in texts]
        truncated = [i for i, n in enumerate(lengths) if n > self.max_input_tokens]
        return self._forward(texts).numpy(), truncated


class HfReranker:
    """Pointwise seq2seq relevance scoring (MonoT5-style true/false)."""

    TEMPLATE = "Query: {query} Document: {text} Relevant:"

    def __init__(self, checkpoint: str, config: ServerConfig) -> None:
        _require_torch()
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self.model = (
            AutoModelForSeq2SeqLM.from_pretrained(checkpoint).to(config.device).eval()
        )
        self.device = config.device
        self.max_input_tokens = config.max_input_tokens
        self.true_id = self.tokenizer.encode("true", add_special_tokens=False)[0]
        self.false_id = self.tokenizer.encode("false", add_special_tokens=False)[0]

    def score(self, query: str, texts: list[str]):
        import torch

        prompts = [self.TEMPLATE.format(query=query, text=t) for t in texts]
        batch = self.tokenizer(
            prompts,
            padding=True,
            truncation=True,
            max_length=self.max_input_tokens,
            return_tensors="pt",
        ).to(self.device)
        decoder_input = torch.full(
            (len(prompts), 1), self.model.config.decoder_start_token_id, device=self.device
        )
        with torch.no_grad():
            logits = self.model(**batch, decoder_input_ids=decoder_input).logits[:, 0, :]
        pair = torch.log_softmax(logits[:, [self.false_id, self.true_id]], dim=1)
        scores = pair[:, 1].exp().cpu().tolist()
        truncated = [
            i
            for i, p in enumerate(prompts)
            if len(self.tokenizer.tokenize(p)) > self.max_input_tokens
        ]
        return scores, truncated


class HfGenerator:
    """Chat-template causal LM generation with beam search."""

    def __init__(self, checkpoint: str, config: ServerConfig) -> None:
        _require_torch()
        from transformers import AutoModelForCausalLM, AutoTokenizer

        self.tokenizer = AutoTokenizer.from_pretrained(checkpoint)
        self.model = (
            AutoModelForCausalLM.from_pretrained(checkpoint).to(config.device).eval()
        )
        self.device = config.device
        self.max_input_tokens = config.max_input_tokens

    def generate(self, prompt_texts: list[str], params: DecodingParams):
        import torch

        # app layer hands us raw message contents in order; rebuild roles
        # is the caller's concern, so join as a plain conversation here
        prompt = "\n".join(prompt_texts)
        inputs = self.tokenizer(
            prompt, truncation=True, max_length=self.max_input_tokens, return_tensors="pt"
        ).to(self.device)
        with torch.no_grad():
            output = self.model.generate(
                **inputs,
                max_new_tokens=params.max_new_tokens,
                num_beams=params.num_beams,
                repetition_penalty=params.repetition_penalty,
                no_repeat_ngram_size=params.no_repeat_ngram,
                do_sample=False,
            )
        new_tokens = output[0][inputs["input_ids"].shape[1] :]
        text = self.tokenizer.decode(new_tokens, skip_special_tokens=True).strip()
        return text, int(new_tokens.shape[0])
