from __future__ import annotations

import os

import numpy as np
import pandas as pd
import requests
import streamlit as st

st.set_page_config(page_title="Predicción — EVPC", page_icon="🦴", layout="wide")

API_BASE = os.getenv("API_BASE_URL", "http://127.0.0.1:8001")

st.title("🦴 Predicción de pose — EVPC")
st.caption(f"API: {API_BASE}/predict")

with st.form("predict_form", clear_on_submit=False):
    uploaded = st.file_uploader("Ventana de eventos (CSV x,y,t,p)", type=["csv"])
    camera_id = st.number_input("Cámara", min_value=0, value=0, step=1)
    submitted = st.form_submit_button("Predecir")

if submitted and uploaded is not None:
    events = pd.read_csv(uploaded, skipinitialspace=True)
    missing = [c for c in ("x", "y", "t", "p") if c not in events.columns]
    if missing:
        st.error(f"Faltan columnas en el CSV: {', '.join(missing)}")
        st.stop()

    payload = {column: events[column].astype(int).tolist() for column in ("x", "y", "t", "p")}
    payload["camera_id"] = int(camera_id)
    headers = {"Content-Type": "application/json", "User-Agent": "EVPC-Panel/Predict"}
    try:
        resp = requests.post(f"{API_BASE}/predict", json=payload, headers=headers, timeout=30)
    except requests.RequestException as e:
        st.error(f"No se pudo conectar a la API en {API_BASE}/predict. ¿Está levantada? Detalle: {e}")
        st.stop()

    if resp.status_code != 200:
        detail = resp.json().get("detail") if resp.headers.get("content-type", "").startswith("application/json") else resp.text
        st.error(f"La API rechazó la ventana ({resp.status_code}): {detail}")
        st.stop()

    data = resp.json()
    cols = st.columns(3)
    cols[0].metric("Eventos", f"{data['n_events']}")
    cols[1].metric("Puntos", f"{data['n_points']}")
    cols[2].metric("Latencia (ms)", f"{data['latency_ms']:.1f}")

    joints = pd.DataFrame(data["joints"], columns=["x", "y"])
    joints["valid"] = data["valid"]
    joints.index.name = "joint"

    st.subheader("Articulaciones")
    st.dataframe(joints, width="stretch")

    st.subheader("Eventos y esqueleto")
    cloud = events[["x", "y"]].assign(kind="evento")
    predicted = joints[joints["valid"]][["x", "y"]].assign(kind="articulación")
    plot = pd.concat([cloud, predicted], ignore_index=True)
    plot["y"] = -plot["y"].astype(np.float64)
    st.scatter_chart(plot, x="x", y="y", color="kind")

st.divider()
st.caption("Consejo: si cambias el puerto/host de la API, exporta API_BASE_URL antes de abrir el panel.")
st.code('export API_BASE_URL="http://127.0.0.1:8001"', language="bash")
