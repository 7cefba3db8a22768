import json
import sys
from pathlib import Path

import pandas as pd
import streamlit as st

sys.path.append(str(Path(__file__).resolve().parents[1]))

from src.eval.metrics import EvalReport  # noqa: E402

st.title("Métricas EVPC")

st.markdown("Sube el informe de `evpc eval` o `evpc bench` (JSON) para visualizar métricas.")

uploaded = st.file_uploader("Informe JSON", type=["json"])
if uploaded:
    data = json.load(uploaded)
    if "stages" in data:
        cols = st.columns(3)
        cols[0].metric("Latencia media (µs)", f"{data['end_to_end'].get('mean_us') or 0:.0f}")
        cols[1].metric("Umbral (µs)", f"{data.get('realtime_threshold_us', 0):.0f}")
        cols[2].metric("Tiempo real", "sí" if data.get("passed") else "no")
        stages = pd.DataFrame(data["stages"])
        st.dataframe(stages, width="stretch")
    else:
        report = EvalReport.model_validate(data)
        st.metric("MPJPE 2D (px)", report.mpjpe2d)
        st.metric("MPJPE 3D (mm)", report.mpjpe3d)
        st.metric("Muestras marcadas", report.flagged_samples)
        if report.two_d and report.two_d.per_joint:
            st.bar_chart(pd.Series(report.two_d.per_joint, name="error 2D por articulación"))
