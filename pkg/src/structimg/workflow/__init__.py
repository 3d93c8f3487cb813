from .backends import AgentBackend, Backends, RemoteChatBackend, ScriptedBackend, ScriptExhausted
from .engine import (
    DispatchResult,
    RefineResult,
    RoundRecord,
    Step,
    Trace,
    WorkflowConfig,
    dispatch,
    fallback_tools,
    planning_critic_review,
    refine_loop,
    run_episode,
    visual_critic_check,
)
from .grammar import (
    BareWord,
    Critique,
    CriticVerdict,
    ImageRef,
    ParseFailure,
    ParsedStep,
    Terminate,
    ToolCall,
    format_action,
    format_critique,
    format_tool_list,
    parse_action,
    parse_critique,
    parse_tool_list,
    parse_verdict,
)
from .memory import ImageMemory, MemoryEntry, UnknownImageId

__all__ = [
    "AgentBackend",
    "Backends",
    "BareWord",
    "Critique",
    "CriticVerdict",
    "DispatchResult",
    "ImageMemory",
    "ImageRef",
    "MemoryEntry",
    "ParseFailure",
    "ParsedStep",
    "RefineResult",
    "RemoteChatBackend",
    "RoundRecord",
    "ScriptExhausted",
    "ScriptedBackend",
    "Step",
    "Terminate",
    "ToolCall",
    "Trace",
    "UnknownImageId",
    "WorkflowConfig",
    "dispatch",
    "fallback_tools",
    "format_action",
    "format_critique",
    "format_tool_list",
    "parse_action",
    "parse_critique",
    "parse_tool_list",
    "parse_verdict",
    "planning_critic_review",
    "refine_loop",
    "run_episode",
    "visual_critic_check",
]
