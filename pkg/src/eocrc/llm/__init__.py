"""Prompt construction, response parsing, endpoint access and fine-tune export."""

from .client import (
    AuditLog,
    EndpointConfig,
    HttpChatEndpoint,
    LLMPrediction,
    LLMPredictor,
    MockEndpoint,
    mock_endpoint,
    predict_with_endpoint,
    request_body,
)
from .finetune import FineTuneExample, export_finetune_dataset, finetune_examples, gold_reply
from .parse import ParsedPrediction, format_percent, parse_response, render_prediction
from .prompt import (
    MAX_TOKENS,
    TEMPERATURE,
    GuidelineSpec,
    PromptBundle,
    build_prompt,
    build_system_text,
    serialize_patient,
    template_head,
)

__all__ = [
    "AuditLog",
    "EndpointConfig",
    "FineTuneExample",
    "GuidelineSpec",
    "HttpChatEndpoint",
    "LLMPrediction",
    "LLMPredictor",
    "MAX_TOKENS",
    "MockEndpoint",
    "ParsedPrediction",
    "PromptBundle",
    "TEMPERATURE",
    "build_prompt",
    "build_system_text",
    "export_finetune_dataset",
    "finetune_examples",
    "format_percent",
    "gold_reply",
    "mock_endpoint",
    "parse_response",
    "predict_with_endpoint",
    "render_prediction",
    "request_body",
    "serialize_patient",
    "template_head",
]
