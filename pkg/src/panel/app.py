from __future__ import annotations

import os
import sqlite3
from datetime import datetime, timedelta
from pathlib import Path

import pandas as pd
import streamlit as st


BASE_DIR = Path(__file__).resolve().parents[2]
ENV_DB = os.getenv("EVPC_LOG_DB")

if ENV_DB:
    candidate = Path(ENV_DB).expanduser()
    DB_PATH = candidate if candidate.is_absolute() else (BASE_DIR / candidate)
else:
    DB_PATH = BASE_DIR / "data" / "runs.db"
DB_PATH = DB_PATH.resolve()


st.set_page_config(page_title="EVPC - Panel", layout="wide")
st.title("Panel de ejecuciones - EVPC")


@st.cache_resource(show_spinner=False)
def _connect(path: Path) -> sqlite3.Connection | None:
    if not path.exists():
        return None
    connection = sqlite3.connect(path, check_same_thread=False)
    connection.row_factory = sqlite3.Row
    return connection


connection = _connect(DB_PATH)

if connection is None:
    st.info("Aún no existe la base de ejecuciones. Lanza 'evpc train' o 'evpc bench' para verla aquí.")
    st.stop()


def _iso_with_z(moment: datetime) -> str:
    return moment.replace(microsecond=0).isoformat() + "Z"


@st.cache_data(show_spinner=False)
def load_runs(start: datetime, end: datetime) -> pd.DataFrame:
    query = """
        SELECT id, ts, command, seed, status, final_loss, mpjpe2d, mpjpe3d,
               latency_mean_us, duration_s, config
        FROM runs
        WHERE ts BETWEEN ? AND ?
    """
    frame = pd.read_sql_query(query, connection, params=(_iso_with_z(start), _iso_with_z(end)))
    if frame.empty:
        return frame
    frame["ts"] = pd.to_datetime(frame["ts"], utc=True, errors="coerce")
    return frame.dropna(subset=["ts"])


@st.cache_data(show_spinner=False)
def load_epochs(run_id: int) -> pd.DataFrame:
    return pd.read_sql_query(
        "SELECT epoch, step, loss, mpjpe2d, lr FROM epochs WHERE run_id = ? ORDER BY epoch",
        connection,
        params=(run_id,),
    )


@st.cache_data(show_spinner=False)
def load_bench(run_id: int) -> pd.DataFrame:
    return pd.read_sql_query(
        "SELECT stage, p50_us, p90_us, p99_us, mean_us, count FROM bench WHERE run_id = ?",
        connection,
        params=(run_id,),
    )


with st.sidebar:
    st.header("Filtros")
    today = datetime.utcnow().date()
    default_start = today - timedelta(days=7)
    date_range = st.date_input("Rango de fechas", value=(default_start, today), max_value=today)

    if isinstance(date_range, tuple) and len(date_range) == 2:
        start_date, end_date = date_range
    else:
        start_date = default_start
        end_date = today

    only_ok = st.toggle("Solo ejecuciones correctas", value=False)


start_dt = datetime.combine(start_date, datetime.min.time())
end_dt = datetime.combine(end_date, datetime.max.time())

runs = load_runs(start_dt, end_dt)

if runs.empty:
    st.info("No hay ejecuciones en el rango seleccionado.")
    st.stop()

command_options = sorted(runs["command"].dropna().unique().tolist())
command_filter = st.sidebar.selectbox("Comando", ["Todos"] + command_options)

filtered = runs.copy()
if command_filter != "Todos":
    filtered = filtered[filtered["command"] == command_filter]
if only_ok:
    filtered = filtered[filtered["status"] == "ok"]

if filtered.empty:
    st.warning("No hay coincidencias con los filtros aplicados.")
    st.stop()


cols = st.columns(4)
cols[0].metric("Ejecuciones", f"{len(filtered)}")
cols[1].metric("Fallidas", f"{int((filtered['status'] == 'failed').sum())}")
best_2d = filtered["mpjpe2d"].dropna()
cols[2].metric("Mejor MPJPE 2D (px)", f"{best_2d.min():.2f}" if not best_2d.empty else "-")
latency = filtered["latency_mean_us"].dropna()
cols[3].metric("Latencia media (µs)", f"{latency.iloc[-1]:.0f}" if not latency.empty else "-")


st.subheader("Ejecuciones")
st.dataframe(
    filtered.sort_values("ts", ascending=False).drop(columns=["config"]).head(200),
    width="stretch",
)

st.subheader("Detalle de una ejecución")
run_id = st.selectbox("Ejecución", filtered.sort_values("ts", ascending=False)["id"].tolist())
if run_id is not None:
    run = filtered[filtered["id"] == run_id].iloc[0]
    with st.expander("Configuración"):
        st.code(run["config"] or "{}", language="json")

    epochs = load_epochs(int(run_id))
    if epochs.empty:
        st.caption("Sin curva de entrenamiento para esta ejecución.")
    else:
        st.caption("Curva de pérdida")
        st.line_chart(epochs, x="epoch", y="loss")
        if epochs["mpjpe2d"].notna().any():
            st.caption("MPJPE 2D de validación (px)")
            st.line_chart(epochs.dropna(subset=["mpjpe2d"]), x="epoch", y="mpjpe2d")

    bench = load_bench(int(run_id))
    if bench.empty:
        st.caption("Sin mediciones de latencia para esta ejecución.")
    else:
        st.caption("Latencia por etapa (µs)")
        st.bar_chart(bench.set_index("stage")[["p50_us", "p90_us", "p99_us"]])
        st.dataframe(bench, width="stretch")
