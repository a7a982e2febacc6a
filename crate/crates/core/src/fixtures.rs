//! A small self-contained demo corpus: four SQLite databases, twenty tasks
//! covering every chart type and difficulty, and a scripted model that
//! answers each task with its gold plan.

use std::fs;
use std::path::{Path, PathBuf};

use rusqlite::{params, Connection};

use crate::corpus::{load_corpus, Corpus, CorpusError, Difficulty, Manifest, ManifestTask};
use crate::gateway::MockScript;
use crate::insight::ANALYSIS_TAG;
use crate::pipeline::CODE_TAG;
use crate::plan::{serialize_plan, AnalysisPlan, ChartSpec, ChartType, SortDir};

pub struct FixtureTask {
    pub id: &'static str,
    pub db: &'static str,
    pub question: &'static str,
    pub difficulty: Difficulty,
    pub sql: &'static str,
    pub chart: ChartSpec,
}

impl FixtureTask {
    pub fn gold_plan(&self) -> AnalysisPlan {
        AnalysisPlan {
            sql: self.sql.to_string(),
            chart: self.chart.clone(),
        }
    }
}

pub const DATABASES: [&str; 4] = ["aircraft", "phone_market", "shop", "weather"];

pub const DEFAULT_ANALYSIS: &str = "\
1. The figure compares the selected values across every category in the result.
2. The largest value is clearly ahead of the rest of the categories.
3. The smallest value is a fraction of the largest one.
4. The gap between neighbouring categories is uneven, so a few entries dominate the total.
5. This suggests that attention should go to the leading categories first.";

fn t(
    id: &'static str,
    db: &'static str,
    difficulty: Difficulty,
    question: &'static str,
    sql: &'static str,
    chart: ChartSpec,
) -> FixtureTask {
    FixtureTask {
        id,
        db,
        question,
        difficulty,
        sql,
        chart,
    }
}

pub fn fixture_tasks() -> Vec<FixtureTask> {
    use ChartType::*;
    use Difficulty::*;
    vec![
        t(
            "t01",
            "aircraft",
            Medium,
            "Please list the proportion number of each winning aircraft.",
            "SELECT a.Aircraft, COUNT(m.Winning_Aircraft) AS wins FROM aircraft a JOIN match m ON a.Aircraft_ID = m.Winning_Aircraft GROUP BY a.Aircraft",
            ChartSpec::new(Pie, "Aircraft", &["wins"]),
        ),
        t(
            "t02",
            "aircraft",
            Easy,
            "Show the max gross weight of each aircraft in a bar chart.",
            "SELECT Aircraft, Max_Gross_Weight FROM aircraft",
            ChartSpec::new(Bar, "Aircraft", &["Max_Gross_Weight"]).with_sort("Max_Gross_Weight", SortDir::Desc),
        ),
        t(
            "t03",
            "aircraft",
            Easy,
            "Plot international passengers against domestic passengers for each airport as a scatter chart.",
            "SELECT International_Passengers, Domestic_Passengers FROM airport",
            ChartSpec::new(Scatter, "International_Passengers", &["Domestic_Passengers"]),
        ),
        t(
            "t04",
            "phone_market",
            Medium,
            "Show the total stock of each phone across all markets.",
            "SELECT p.Name, SUM(pm.Num_of_stock) AS total_stock FROM phone p JOIN phone_market pm ON p.Phone_ID = pm.Phone_ID GROUP BY p.Name ORDER BY total_stock DESC",
            ChartSpec::new(Bar, "Name", &["total_stock"]),
        ),
        t(
            "t05",
            "phone_market",
            Hard,
            "Considering the phone market in recent years, which phone is more popular?",
            "SELECT p.Name, SUM(pm.Num_of_stock) AS stock FROM phone p JOIN phone_market pm ON p.Phone_ID = pm.Phone_ID GROUP BY p.Name ORDER BY stock DESC",
            ChartSpec::new(Pie, "Name", &["stock"]),
        ),
        t(
            "t06",
            "phone_market",
            Hard,
            "Show the stock of each phone in each district as a stacked bar chart.",
            "SELECT m.District, p.Name, pm.Num_of_stock FROM phone_market pm JOIN market m ON pm.Market_ID = m.Market_ID JOIN phone p ON pm.Phone_ID = p.Phone_ID",
            ChartSpec::new(StackedBar, "District", &["Num_of_stock"]).with_series("Name"),
        ),
        t(
            "t07",
            "phone_market",
            Medium,
            "Plot the number of employees against the number of shops for each market.",
            "SELECT Num_of_employees, Num_of_shops FROM market",
            ChartSpec::new(Scatter, "Num_of_employees", &["Num_of_shops"]),
        ),
        t(
            "t08",
            "phone_market",
            ExtraHard,
            "Plot memory against price for each phone, grouped by carrier.",
            "SELECT Memory_in_G, Price, Carrier FROM phone",
            ChartSpec::new(GroupingScatter, "Memory_in_G", &["Price"]).with_series("Carrier"),
        ),
        t(
            "t09",
            "shop",
            Easy,
            "How did total revenue change month by month?",
            "SELECT month, SUM(revenue) AS total_revenue FROM sales GROUP BY month ORDER BY month",
            ChartSpec::new(Line, "month", &["total_revenue"]),
        ),
        t(
            "t10",
            "shop",
            Medium,
            "Show monthly units sold for each region as a grouping line chart.",
            "SELECT month, region, SUM(units) AS units FROM sales GROUP BY month, region ORDER BY month, region",
            ChartSpec::new(GroupingLine, "month", &["units"]).with_series("region"),
        ),
        t(
            "t11",
            "shop",
            Medium,
            "Show revenue by region broken down by product in a stacked bar chart.",
            "SELECT region, product, SUM(revenue) AS revenue FROM sales GROUP BY region, product",
            ChartSpec::new(StackedBar, "region", &["revenue"]).with_series("product"),
        ),
        t(
            "t12",
            "shop",
            Easy,
            "What share of units does each product account for?",
            "SELECT product, SUM(units) AS units FROM sales GROUP BY product",
            ChartSpec::new(Pie, "product", &["units"]),
        ),
        t(
            "t13",
            "shop",
            Hard,
            "Which region had the highest average revenue per sale in the first quarter?",
            "SELECT region, AVG(revenue) AS avg_revenue FROM sales WHERE month <= '2023-03' GROUP BY region",
            ChartSpec::new(Bar, "region", &["avg_revenue"]),
        ),
        t(
            "t14",
            "shop",
            Hard,
            "Is there a relationship between units and revenue across sales?",
            "SELECT units, revenue FROM sales",
            ChartSpec::new(Scatter, "units", &["revenue"]),
        ),
        t(
            "t15",
            "shop",
            ExtraHard,
            "For months where more than 100 units were sold in total, show units per product stacked by month.",
            "SELECT month, product, SUM(units) AS units FROM sales WHERE month IN (SELECT month FROM sales GROUP BY month HAVING SUM(units) > 100) GROUP BY month, product ORDER BY month",
            ChartSpec::new(StackedBar, "month", &["units"]).with_series("product"),
        ),
        t(
            "t16",
            "weather",
            Medium,
            "How did the maximum temperature in Springfield change over the week?",
            "SELECT date, max_temp FROM weather WHERE city = 'Springfield' ORDER BY date",
            ChartSpec::new(Line, "date", &["max_temp"]),
        ),
        t(
            "t17",
            "weather",
            Hard,
            "Show the daily temperature range averaged over cities as a line chart.",
            "SELECT date, AVG(max_temp - min_temp) AS avg_range FROM weather GROUP BY date ORDER BY date",
            ChartSpec::new(Line, "date", &["avg_range"]),
        ),
        t(
            "t18",
            "weather",
            ExtraHard,
            "Compare daily precipitation between cities as a grouping line chart.",
            "SELECT date, city, precipitation FROM weather ORDER BY date, city",
            ChartSpec::new(GroupingLine, "date", &["precipitation"]).with_series("city"),
        ),
        t(
            "t19",
            "weather",
            Hard,
            "Plot minimum against maximum temperature for each day, grouped by city.",
            "SELECT min_temp, max_temp, city FROM weather",
            ChartSpec::new(GroupingScatter, "min_temp", &["max_temp"]).with_series("city"),
        ),
        t(
            "t20",
            "weather",
            Easy,
            "Show the number of rainy days per city, counting days with more than 1 mm of precipitation.",
            "SELECT city, COUNT(*) AS rainy_days FROM weather WHERE precipitation > 1 GROUP BY city",
            ChartSpec::new(Bar, "city", &["rainy_days"]),
        ),
    ]
}

pub fn db_relative_path(db: &str) -> String {
    format!("{db}/{db}.sqlite")
}

fn build_aircraft(conn: &Connection) -> rusqlite::Result<()> {
    conn.execute_batch(
        "CREATE TABLE aircraft (Aircraft_ID INTEGER PRIMARY KEY, Aircraft TEXT, Description TEXT, Max_Gross_Weight INTEGER);
         CREATE TABLE match (Round INTEGER PRIMARY KEY, Location TEXT, Country TEXT, Winning_Pilot TEXT, Winning_Aircraft INTEGER REFERENCES aircraft(Aircraft_ID));
         CREATE TABLE airport (Airport_ID INTEGER PRIMARY KEY, Airport_Name TEXT, International_Passengers INTEGER, Domestic_Passengers INTEGER);",
    )?;
    let aircraft = [
        (1, "Robinson R-22", "Light utility helicopter", 1370),
        (2, "Bell 206B3 JetRanger", "Turboshaft utility helicopter", 3200),
        (3, "CH-47D Chinook", "Tandem rotor helicopter", 50000),
        (4, "Mil Mi-26", "Heavy-lift helicopter", 123500),
        (5, "CH-53E Super Stallion", "Heavy-lift helicopter", 73500),
    ];
    for (id, name, desc, w) in aircraft {
        conn.execute("INSERT INTO aircraft VALUES (?1, ?2, ?3, ?4)", params![id, name, desc, w])?;
    }
    let matches = [
        (1, "Mina' Zayid , Abu Dhabi", "United Arab Emirates", "Hannes Arch", 1),
        (2, "Swan River , Perth", "Australia", "Paul Bonhomme", 1),
        (3, "Flamengo Beach , Rio de Janeiro", "Brazil", "Nigel Lamb", 2),
        (4, "Windsor , Ontario", "Canada", "Kirby Chambliss", 3),
        (5, "New York City", "United States", "Hannes Arch", 4),
        (6, "EuroSpeedway Lausitz", "Germany", "Peter Besenyei", 4),
        (7, "River Danube , Budapest", "Hungary", "Matthias Dolderer", 5),
    ];
    for (r, loc, country, pilot, ac) in matches {
        conn.execute("INSERT INTO match VALUES (?1, ?2, ?3, ?4, ?5)", params![r, loc, country, pilot, ac])?;
    }
    let airports = [
        (1, "London Heathrow", 61_344_438, 5_562_516),
        (2, "London Gatwick", 27_554_405, 3_930_348),
        (3, "London Stansted", 19_996_947, 2_343_428),
        (4, "Manchester", 18_119_230, 2_943_719),
        (5, "London Luton", 8_105_162, 1_471_538),
        (6, "Birmingham", 7_773_181, 1_295_666),
    ];
    for (id, name, intl, dom) in airports {
        conn.execute("INSERT INTO airport VALUES (?1, ?2, ?3, ?4)", params![id, name, intl, dom])?;
    }
    Ok(())
}

fn build_phone_market(conn: &Connection) -> rusqlite::Result<()> {
    conn.execute_batch(
        "CREATE TABLE phone (Phone_ID INTEGER PRIMARY KEY, Name TEXT, Memory_in_G INTEGER, Carrier TEXT, Price REAL);
         CREATE TABLE market (Market_ID INTEGER PRIMARY KEY, District TEXT, Num_of_employees INTEGER, Num_of_shops REAL, Ranking INTEGER);
         CREATE TABLE phone_market (Market_ID INTEGER REFERENCES market(Market_ID), Phone_ID INTEGER REFERENCES phone(Phone_ID), Num_of_stock INTEGER, PRIMARY KEY (Market_ID, Phone_ID));",
    )?;
    let phones = [
        (1, "IPhone 5s", 32, "Sprint", 320.0),
        (2, "IPhone 6", 128, "Sprint", 480.0),
        (3, "IPhone 6s", 128, "TMobile", 699.0),
        (4, "IPhone 7", 16, "TMobile", 899.0),
        (5, "IPhone X", 64, "TMobile", 1000.0),
    ];
    for (id, name, mem, carrier, price) in phones {
        conn.execute("INSERT INTO phone VALUES (?1, ?2, ?3, ?4, ?5)", params![id, name, mem, carrier, price])?;
    }
    let markets = [
        (1, "Alberta", 1966, 40.0, 1),
        (2, "British Columbia", 1965, 49.0, 21),
        (3, "Ontario", 1958, 54.0, 5),
        (4, "Quebec", 1958, 16.0, 3),
    ];
    for (id, district, emp, shops, rank) in markets {
        conn.execute("INSERT INTO market VALUES (?1, ?2, ?3, ?4, ?5)", params![id, district, emp, shops, rank])?;
    }
    let stock = [(1, 1, 2232), (2, 1, 682), (1, 3, 4000), (4, 3, 324), (2, 5, 2540), (3, 4, 874)];
    for (m, p, n) in stock {
        conn.execute("INSERT INTO phone_market VALUES (?1, ?2, ?3)", params![m, p, n])?;
    }
    Ok(())
}

fn build_shop(conn: &Connection) -> rusqlite::Result<()> {
    conn.execute_batch(
        "CREATE TABLE sales (sale_id INTEGER PRIMARY KEY, month TEXT, region TEXT, product TEXT, units INTEGER, revenue REAL);",
    )?;
    let mut id = 0;
    for m in 1..=6i64 {
        for (region, rbonus) in [("North", 5), ("South", 0)] {
            for (product, pbonus, price) in [("Widget", 7, 12.5), ("Gadget", 0, 20.0)] {
                id += 1;
                let units = 10 + 3 * m + rbonus + pbonus;
                conn.execute(
                    "INSERT INTO sales VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                    params![id, format!("2023-{m:02}"), region, product, units, units as f64 * price],
                )?;
            }
        }
    }
    Ok(())
}

fn build_weather(conn: &Connection) -> rusqlite::Result<()> {
    conn.execute_batch(
        "CREATE TABLE weather (date TEXT, city TEXT, max_temp REAL, min_temp REAL, precipitation REAL, PRIMARY KEY (date, city));",
    )?;
    let springfield = [(24.5, 15.0, 0.0), (26.0, 16.5, 0.0), (22.0, 14.0, 3.5), (19.5, 12.0, 8.0), (21.0, 13.5, 1.5), (25.5, 15.5, 0.0), (27.0, 17.0, 0.5)];
    let shelbyville = [(20.0, 11.0, 2.0), (21.5, 12.5, 0.0), (18.0, 10.0, 6.5), (17.5, 9.5, 12.0), (19.0, 11.5, 4.0), (22.5, 13.0, 0.0), (23.0, 14.5, 0.0)];
    for (i, ((a, b, c), (d, e, f))) in springfield.iter().zip(shelbyville.iter()).enumerate() {
        let date = format!("2023-07-{:02}", i + 1);
        conn.execute("INSERT INTO weather VALUES (?1, 'Springfield', ?2, ?3, ?4)", params![date, a, b, c])?;
        conn.execute("INSERT INTO weather VALUES (?1, 'Shelbyville', ?2, ?3, ?4)", params![date, d, e, f])?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn io(path: &Path, e: impl std::fmt::Display) -> FixtureError {
    FixtureError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Create `<dir>/<db>/<db>.sqlite` for every fixture database.
pub fn build_databases(dir: &Path) -> Result<(), FixtureError> {
    for db in DATABASES {
        let path = dir.join(db_relative_path(db));
        fs::create_dir_all(path.parent().expect("nested path")).map_err(|e| io(&path, e))?;
        if path.exists() {
            fs::remove_file(&path).map_err(|e| io(&path, e))?;
        }
        let conn = Connection::open(&path).map_err(|e| io(&path, e))?;
        let built = match db {
            "aircraft" => build_aircraft(&conn),
            "phone_market" => build_phone_market(&conn),
            "shop" => build_shop(&conn),
            _ => build_weather(&conn),
        };
        built.map_err(|e| io(&path, e))?;
    }
    Ok(())
}

pub fn manifest() -> Manifest {
    Manifest {
        root: ".".into(),
        tasks: fixture_tasks()
            .into_iter()
            .map(|t| ManifestTask {
                id: t.id.into(),
                question: t.question.into(),
                db_file: db_relative_path(t.db),
                chart_type: Some(t.chart.chart_type),
                difficulty: t.difficulty,
                domain: t.db.into(),
                gold_sql: Some(t.sql.into()),
                gold_bullets: None,
            })
            .collect(),
    }
}

/// Databases plus `manifest.json` under `dir`; returns the manifest path.
pub fn write_corpus(dir: &Path) -> Result<PathBuf, FixtureError> {
    build_databases(dir)?;
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest()).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| io(&path, e))?;
    Ok(path)
}

pub fn demo_corpus(dir: &Path) -> Result<Corpus, FixtureError> {
    Ok(load_corpus(&write_corpus(dir)?)?)
}

/// Text that picks out one task's step-1 prompt.
pub fn prompt_key(question: &str) -> String {
    format!("Question: {question}\n")
}

/// Gold plan for every task, the default analysis for everything else.
pub fn mock_script() -> MockScript {
    let mut s = MockScript::new();
    for t in fixture_tasks() {
        s = s.with_match(CODE_TAG, prompt_key(t.question), serialize_plan(&t.gold_plan()));
    }
    s.with(ANALYSIS_TAG, DEFAULT_ANALYSIS)
}

/// Run every task through a recording gateway backed by [`mock_script`],
/// leaving a cassette at `cassette` and scratch runs under `scratch`.
pub fn record_cassette(corpus: &Corpus, scratch: &Path, cassette: &Path) -> Result<(), FixtureError> {
    use crate::gateway::{BackendMode, LlmGateway};
    use crate::pipeline::{Pipeline, PipelineConfig};
    use std::sync::Arc;

    let mut cfg = PipelineConfig::new(scratch, "record");
    cfg.backend_mode = BackendMode::Record;
    let gateway = LlmGateway::record(Arc::new(mock_script()), Some(cassette.to_path_buf()));
    let p = Pipeline::new(cfg, Arc::new(gateway));
    for rec in p.run_batch(&corpus.tasks, 1) {
        if !rec.is_ok() {
            return Err(io(&rec.run_dir, format!("recording failed: {:?}", rec.error)));
        }
    }
    p.gateway().save_cassette(cassette).map_err(|e| io(cassette, e))
}
