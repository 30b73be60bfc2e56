import io
from typing import Dict, List, Optional, Sequence

import pandas as pd

from .models import ENGAGEMENT_ORDER, EvalReport, LFStats


def get_lf_summary_df(stats: Sequence[LFStats]) -> pd.DataFrame:
    data = []
    for s in stats:
        data.append({
            'LF': s.name,
            'Coverage': round(s.coverage, 6),
            'Positive': s.positive,
            'Negative': s.negative,
            'Abstain': s.abstain,
            'Empirical Accuracy': None if s.empirical_accuracy is None else round(s.empirical_accuracy, 6),
        })
    return pd.DataFrame(data, columns=['LF', 'Coverage', 'Positive', 'Negative', 'Abstain', 'Empirical Accuracy'])


def get_lf_correlations_df(corr: pd.DataFrame) -> pd.DataFrame:
    """Long form of a square correlation matrix, one row per unordered LF pair."""
    names = list(corr.columns)
    data = []
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            value = corr.loc[a, b]
            data.append({'lf_a': a, 'lf_b': b, 'correlation': None if pd.isna(value) else round(float(value), 6)})
    return pd.DataFrame(data, columns=['lf_a', 'lf_b', 'correlation'])


def get_metrics_df(report: EvalReport) -> pd.DataFrame:
    metric = f"ndcg@{report.k}"
    return pd.DataFrame([
        {'label_set': 'original', 'metric': metric, 'value': report.ndcg_original},
        {'label_set': 'effective', 'metric': metric, 'value': report.ndcg_effective},
        {'label_set': 'weak', 'metric': metric, 'value': report.ndcg_weak},
    ])


def get_quantiles_df(report: EvalReport) -> pd.DataFrame:
    data = []
    for engagement in ENGAGEMENT_ORDER:
        for q, value in report.per_engagement_quantiles.get(engagement, []):
            data.append({'engagement': engagement.value, 'quantile': q, 'p': value})
    return pd.DataFrame(data, columns=['engagement', 'quantile', 'p'])


def get_fraction_above_df(report: EvalReport) -> pd.DataFrame:
    data = []
    for engagement in ENGAGEMENT_ORDER:
        for threshold, share in sorted(report.fraction_above.get(engagement, {}).items()):
            data.append({'engagement': engagement.value, 'threshold': threshold, 'fraction_above': share})
    return pd.DataFrame(data, columns=['engagement', 'threshold', 'fraction_above'])


def get_feature_importance_df(report: EvalReport, feature_names: Optional[Sequence[str]] = None) -> pd.DataFrame:
    names = list(feature_names) if feature_names else [f"f{i}" for i in range(len(report.feature_importance))]
    df = pd.DataFrame({'feature': names, 'importance': report.feature_importance})
    return df.sort_values('importance', ascending=False, kind='mergesort').reset_index(drop=True)


def get_anomalies_df(anomalies: Dict[str, List[str]]) -> pd.DataFrame:
    data = [{'kind': kind, 'record_id': rid} for kind, ids in anomalies.items() for rid in ids]
    return pd.DataFrame(data, columns=['kind', 'record_id'])


def export_df_to_excel(sheets: Dict[str, pd.DataFrame]) -> io.BytesIO:
    """One sheet per frame, in insertion order."""
    output = io.BytesIO()
    with pd.ExcelWriter(output, engine='openpyxl') as writer:
        for name, df in sheets.items():
            # Excel caps sheet names at 31 characters
            df.to_excel(writer, index=False, sheet_name=name[:31])
    output.seek(0)
    return output


def export_df_to_csv(df: pd.DataFrame) -> io.BytesIO:
    output = io.BytesIO()
    output.write(df.to_csv(index=False, lineterminator='\n').encode('utf-8'))
    output.seek(0)
    return output
