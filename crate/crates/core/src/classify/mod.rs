//! Scene identification: curvature-based rules with anchor extraction,
//! followed by optional refinement through a vision-language model.

mod prompt;
mod rules;
mod vlm;

pub use prompt::SYSTEM_PROMPT;
pub use rules::{
    audit_dataset_balance, classify_optional, classify_rule_based, constrained_delta_k, Balance,
    RuleLabel, RuleThresholds, RuleVerdict,
};
pub use vlm::{
    build_vlm_request, classify_pipeline, extract_first_json_object, parse_vlm_reply,
    refine_with_vlm, render_bev_cue, PipelineVerdict, VlmClient, VlmError, VlmRequest, VlmVerdict,
    FRONT_CAMERAS,
};
