from .integratedGradients import AttributionResult, attributeSamples, integrated_gradients
from .campaign import AttributionCampaign, FrequencyReport, attribution_campaign, rank_and_count
