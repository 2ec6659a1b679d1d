#!/usr/bin/env python3
"""Regenerate the committed data fixtures.

Outputs (all deterministic, seeded):
  src/clincalc/data/formula_bank_55.jsonl   shipped reference formula bank
  tests/fixtures/cases_1048.jsonl           full benchmark-shaped dataset
  tests/fixtures/cases_10.jsonl             replay subset (includes row 369)
  tests/fixtures/bank_785.jsonl             55 real + 730 distractor formulas
  tests/fixtures/retrieval_queries.jsonl    one task description per calculator
  tests/fixtures/specialty_map.json         calculator -> specialty config

The dataset encodes the documented data bugs on purpose: reversed
negative limits on the 46 listed rows, plus the per-calculator removals,
so cleaning retains exactly 940 of 1048.
"""

from __future__ import annotations

import json
import random
from decimal import Decimal
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
BANK_PATH = ROOT / "src/clincalc/data/formula_bank_55.jsonl"
FIXTURES = ROOT / "tests/fixtures"

# Rows whose limits are stored reversed in the raw file (all negative golds).
NEG46 = [
    472, 803, 473, 946, 940, 804, 764, 936, 761, 798, 930, 738, 934, 938, 789,
    469, 792, 948, 944, 937, 781, 941, 507, 478, 801, 945, 931, 477, 806, 929,
    763, 794, 471, 932, 481, 942, 947, 943, 805, 486, 939, 768, 810, 933, 935,
    468,
]

RULE = "rule_based"
EQN = "equation_based"

# id, name, category, specialty, description, expression, question,
# variables [(name, unit, lo, hi, dp)], gold range (lo, hi, dp)
CALCULATORS = [
    (1, "Creatinine Clearance (Cockcroft-Gault)", EQN, "Nephrology",
     "Estimates creatinine clearance from age, weight, sex, and serum creatinine.",
     "CrCl [mL/min] = ((140 - age) * weight [kg] * (0.85 if female)) / (72 * serum creatinine [mg/dL])",
     "Using the Cockcroft-Gault equation, what is the patient's creatinine clearance in mL/min?",
     [("age", "years", 25, 90, 0), ("weight", "kg", 45, 120, 1), ("serum creatinine", "mg/dL", 0.5, 4.0, 2)],
     (15, 130, 2)),
    (2, "CKD-EPI 2021 eGFR", EQN, "Nephrology",
     "Estimates glomerular filtration rate from serum creatinine, age, and sex (race-free 2021 refit).",
     "eGFR = 142 * min(Scr/k, 1)^a * max(Scr/k, 1)^-1.200 * 0.9938^age * (1.012 if female); k = 0.7 (female) or 0.9 (male); a = -0.241 (female) or -0.302 (male)",
     "What is the patient's estimated GFR by the CKD-EPI 2021 equation, in mL/min/1.73 m2?",
     [("serum creatinine", "mg/dL", 0.5, 4.0, 2), ("age", "years", 20, 90, 0)],
     (8, 120, 2)),
    (3, "FeverPAIN Score for Strep Pharyngitis", RULE, "Infectious Disease",
     "Predicts likelihood of streptococcal pharyngitis to guide antibiotic strategy.",
     "One point each: fever in past 24 hours; purulence on tonsils; attended rapidly (within 3 days of onset); severely inflamed tonsils; no cough or coryza. Score range 0-5.",
     "What is the patient's FeverPAIN score for strep pharyngitis?",
     [("fever in past 24h", None, 0, 1, 0), ("purulent tonsils", None, 0, 1, 0), ("attended within 3 days", None, 0, 1, 0)],
     (0, 5, 0)),
    (4, "Body Mass Index (BMI)", EQN, "Endocrinology & Metabolism",
     "Body mass normalized by height squared; screens weight categories.",
     "BMI [kg/m2] = weight [kg] / (height [m])^2",
     "What is the patient's body mass index in kg/m2?",
     [("weight", "kg", 40, 140, 1), ("height", "m", 1.45, 1.98, 2)],
     (15, 45, 2)),
    (5, "Body Surface Area (Mosteller)", EQN, "Clinical Pharmacology",
     "Body surface area for dosing, by the Mosteller square-root formula.",
     "BSA [m2] = sqrt(height [cm] * weight [kg] / 3600)",
     "Calculate the patient's body surface area in m2 using the Mosteller formula.",
     [("height", "cm", 145, 200, 0), ("weight", "kg", 40, 140, 1)],
     (1.3, 2.5, 2)),
    (6, "Ideal Body Weight (Devine)", EQN, "Clinical Pharmacology",
     "Ideal body weight from height and sex by the Devine formula.",
     "IBW [kg] = 50 (male) or 45.5 (female) + 2.3 * (height [in] - 60)",
     "What is the patient's ideal body weight in kg by the Devine formula?",
     [("height", "in", 58, 78, 0), ("sex", None, 0, 1, 0)],
     (45, 95, 1)),
    (7, "Adjusted Body Weight", EQN, "Clinical Pharmacology",
     "Dosing weight for obese patients interpolating ideal and actual weight.",
     "AdjBW [kg] = IBW + 0.4 * (actual weight - IBW)",
     "What is the patient's adjusted body weight in kg?",
     [("actual weight", "kg", 70, 180, 1), ("ideal body weight", "kg", 45, 95, 1)],
     (55, 130, 2)),
    (8, "Mean Arterial Pressure", EQN, "Cardiology",
     "Average arterial pressure over one cardiac cycle.",
     "MAP [mmHg] = (SBP + 2 * DBP) / 3",
     "What is the patient's mean arterial pressure in mmHg?",
     [("systolic blood pressure", "mmHg", 80, 200, 0), ("diastolic blood pressure", "mmHg", 40, 120, 0)],
     (55, 140, 2)),
    (9, "Corrected Calcium for Hypoalbuminemia", EQN, "Endocrinology & Metabolism",
     "Adjusts total serum calcium for low albumin.",
     "corrected Ca [mg/dL] = measured Ca + 0.8 * (4.0 - albumin [g/dL])",
     "What is the patient's albumin-corrected calcium in mg/dL?",
     [("measured calcium", "mg/dL", 6.5, 11.0, 1), ("albumin", "g/dL", 1.5, 4.5, 1)],
     (7, 12, 2)),
    (10, "Sodium Correction for Hyperglycemia", EQN, "Endocrinology & Metabolism",
     "Corrects measured sodium for elevated glucose (Hillier 1999 factor).",
     "corrected Na [mEq/L] = measured Na + 0.024 * (glucose [mg/dL] - 100); classic variant uses 0.016 per mg/dL above 100",
     "What is the corrected sodium concentration (mEq/L) using the Hillier 1999 equation?",
     [("sodium", "mEq/L", 118, 140, 0), ("glucose", "mg/dL", 150, 900, 0)],
     (125, 150, 3)),
    (11, "QTc Bazett Calculator", EQN, "Cardiology",
     "Heart-rate-corrected QT interval by Bazett's square-root method.",
     "QTc [s] = QT [s] / sqrt(RR [s]); RR = 60 / heart rate",
     "What is the patient's corrected QT interval (QTc, seconds) by the Bazett formula?",
     [("QT interval", "ms", 320, 520, 0), ("heart rate", "bpm", 45, 130, 0)],
     (0.35, 0.55, 3)),
    (12, "QTc Fridericia", EQN, "Cardiology",
     "Heart-rate-corrected QT interval by the cube-root Fridericia method.",
     "QTc [s] = QT [s] / (RR [s])^(1/3); RR = 60 / heart rate",
     "What is the patient's corrected QT interval (QTc, seconds) by the Fridericia formula?",
     [("QT interval", "ms", 320, 520, 0), ("heart rate", "bpm", 45, 130, 0)],
     (0.35, 0.55, 3)),
    (13, "Estimated Due Date", EQN, "Obstetrics & Gynecology",
     "Expected date of delivery from the last menstrual period.",
     "EDD = last menstrual period + 280 days (40 weeks)",
     "How many days remain from today until the estimated due date?",
     [("days since LMP", "days", 10, 270, 0)],
     (10, 270, 0)),
    (14, "Estimated Gestational Age", EQN, "Obstetrics & Gynecology",
     "Gestational age in weeks from the last menstrual period.",
     "GA [weeks] = (reference date - last menstrual period) / 7 days",
     "What is the estimated gestational age in weeks?",
     [("days since LMP", "days", 10, 280, 0)],
     (1.4, 40, 2)),
    (15, "Wells' Criteria for Pulmonary Embolism", RULE, "Pulmonology & Critical Care",
     "Pre-test probability of pulmonary embolism.",
     "Clinical signs of DVT +3; PE is most likely diagnosis +3; heart rate > 100 +1.5; immobilization >= 3 days or surgery in past 4 weeks +1.5; previous DVT/PE +1.5; hemoptysis +1; malignancy +1",
     "What is the patient's Wells score for pulmonary embolism?",
     [("heart rate", "bpm", 60, 140, 0), ("signs of DVT", None, 0, 1, 0)],
     (0, 12, 1)),
    (16, "Wells' Criteria for DVT", RULE, "Thrombosis/Hematology",
     "Pre-test probability of deep vein thrombosis.",
     "Nine findings +1 each (active cancer, paralysis or recent cast, bedridden >= 3 days or major surgery within 12 weeks, localized tenderness, entire leg swollen, calf swelling > 3 cm, pitting edema, collateral superficial veins, previously documented DVT); alternative diagnosis at least as likely -2",
     "What is the patient's Wells score for deep vein thrombosis?",
     [("calf swelling", "cm", 0, 6, 1), ("active cancer", None, 0, 1, 0)],
     (-2, 9, 0)),
    (17, "CHA2DS2-VASc Score", RULE, "Cardiology",
     "Stroke risk in atrial fibrillation.",
     "CHF +1; hypertension +1; age >= 75 +2; diabetes +1; prior stroke/TIA/thromboembolism +2; vascular disease +1; age 65-74 +1; female sex +1",
     "What is the patient's CHA2DS2-VASc score?",
     [("age", "years", 40, 95, 0), ("sex", None, 0, 1, 0)],
     (0, 9, 0)),
    (18, "HAS-BLED Score", RULE, "Thrombosis/Hematology",
     "Major bleeding risk on anticoagulation.",
     "Hypertension +1; abnormal renal function +1; abnormal liver function +1; stroke +1; bleeding history +1; labile INR +1; age > 65 +1; antiplatelet/NSAID use +1; alcohol excess +1",
     "What is the patient's HAS-BLED bleeding risk score?",
     [("age", "years", 40, 95, 0), ("hypertension", None, 0, 1, 0)],
     (0, 9, 0)),
    (19, "HEART Score", RULE, "Cardiology",
     "Risk of major adverse cardiac events in chest-pain patients.",
     "History, ECG, Age, Risk factors, Troponin: each component scored 0, 1, or 2; total 0-10",
     "What is the patient's HEART score for major adverse cardiac events?",
     [("age", "years", 30, 90, 0), ("troponin ratio", "x normal", 0, 5, 1)],
     (0, 10, 0)),
    (20, "CURB-65 Score", RULE, "Pulmonology & Critical Care",
     "Pneumonia severity and disposition.",
     "Confusion +1; BUN > 19 mg/dL +1; respiratory rate >= 30 +1; SBP < 90 or DBP <= 60 +1; age >= 65 +1",
     "What is the patient's CURB-65 pneumonia severity score?",
     [("age", "years", 30, 95, 0), ("respiratory rate", "breaths/min", 12, 40, 0), ("BUN", "mg/dL", 8, 60, 0)],
     (0, 5, 0)),
    (21, "Centor Score (Modified/McIsaac)", RULE, "Infectious Disease",
     "Streptococcal pharyngitis probability with age adjustment.",
     "Tonsillar exudate +1; tender anterior cervical adenopathy +1; history of fever +1; absence of cough +1; age 3-14 +1, age 15-44 +0, age >= 45 -1",
     "What is the patient's Modified Centor (McIsaac) score?",
     [("age", "years", 5, 70, 0), ("fever", None, 0, 1, 0)],
     (-1, 5, 0)),
    (22, "Glasgow Coma Scale", RULE, "Pulmonology & Critical Care",
     "Level of consciousness from eye, verbal, and motor responses.",
     "GCS = eye opening (1-4) + verbal response (1-5) + motor response (1-6); total 3-15",
     "What is the patient's Glasgow Coma Scale score?",
     [("eye response", "points", 1, 4, 0), ("verbal response", "points", 1, 5, 0), ("motor response", "points", 1, 6, 0)],
     (3, 15, 0)),
    (23, "Child-Pugh Score", RULE, "Hepatology/Gastroenterology",
     "Severity of cirrhosis.",
     "Bilirubin, albumin, INR, ascites, and encephalopathy each scored 1-3 points; total 5-15 (class A 5-6, B 7-9, C 10-15)",
     "What is the patient's Child-Pugh score for cirrhosis severity?",
     [("bilirubin", "mg/dL", 0.5, 6.0, 1), ("albumin", "g/dL", 1.8, 4.5, 1), ("INR", None, 0.9, 3.5, 1)],
     (5, 15, 0)),
    (24, "MELD Na (UNOS/OPTN)", EQN, "Hepatology/Gastroenterology",
     "End-stage liver disease severity with sodium.",
     "MELD = round(10 * (0.957 * ln(creatinine) + 0.378 * ln(bilirubin) + 1.120 * ln(INR) + 0.643)); MELD-Na = MELD + 1.32 * (137 - Na) - 0.033 * MELD * (137 - Na), Na clamped to 125-137",
     "What is the patient's MELD-Na score?",
     [("creatinine", "mg/dL", 0.6, 4.0, 1), ("bilirubin", "mg/dL", 0.5, 10.0, 1), ("INR", None, 1.0, 3.5, 1), ("sodium", "mEq/L", 120, 140, 0)],
     (6, 40, 0)),
    (25, "FIB-4 Index", EQN, "Hepatology/Gastroenterology",
     "Liver fibrosis from routine labs.",
     "FIB-4 = (age [years] * AST [U/L]) / (platelets [10^9/L] * sqrt(ALT [U/L]))",
     "What is the patient's FIB-4 index for liver fibrosis?",
     [("age", "years", 25, 80, 0), ("AST", "U/L", 15, 300, 0), ("ALT", "U/L", 10, 300, 0), ("platelets", "10^9/L", 60, 400, 0)],
     (0.2, 8, 2)),
    (26, "Anion Gap", EQN, "Nephrology",
     "Unmeasured anions in serum.",
     "anion gap [mEq/L] = Na - (Cl + HCO3)",
     "What is the patient's serum anion gap in mEq/L?",
     [("sodium", "mEq/L", 125, 150, 0), ("chloride", "mEq/L", 90, 115, 0), ("bicarbonate", "mEq/L", 8, 30, 0)],
     (4, 30, 0)),
    (27, "Serum Osmolality", EQN, "Nephrology",
     "Calculated serum osmolality from sodium, glucose, and BUN.",
     "osmolality [mOsm/kg] = 2 * Na + glucose/18 + BUN/2.8",
     "What is the patient's calculated serum osmolality in mOsm/kg?",
     [("sodium", "mEq/L", 120, 155, 0), ("glucose", "mg/dL", 70, 600, 0), ("BUN", "mg/dL", 5, 80, 0)],
     (250, 340, 2)),
    (28, "APACHE II Score", RULE, "Pulmonology & Critical Care",
     "ICU mortality risk from twelve acute physiology variables plus age and chronic health.",
     "Sum of 12 acute physiology points (temperature, MAP, heart rate, respiratory rate, oxygenation via A-a gradient when FiO2 >= 0.5: 350-499 +3, >= 500 +4, arterial pH, sodium, potassium, creatinine, hematocrit, WBC, GCS) + age points + chronic health points",
     "What is the patient's APACHE II score?",
     [("temperature", "C", 33, 41, 1), ("mean arterial pressure", "mmHg", 45, 140, 0), ("heart rate", "bpm", 40, 170, 0)],
     (0, 40, 0)),
    (29, "Free Water Deficit", EQN, "Nephrology",
     "Water deficit in hypernatremia.",
     "free water deficit [L] = TBW fraction * weight [kg] * (serum Na / 140 - 1); TBW fraction 0.6 (male) / 0.5 (female), 0.5/0.45 if elderly",
     "What is the patient's free water deficit in liters?",
     [("weight", "kg", 45, 120, 1), ("sodium", "mEq/L", 145, 175, 0)],
     (0.5, 12, 2)),
    (30, "Sodium Deficit in Hyponatremia", EQN, "Nephrology",
     "Sodium required to reach a target concentration.",
     "Na deficit [mEq] = TBW fraction * weight [kg] * (target Na - serum Na)",
     "What is the patient's total sodium deficit in mEq?",
     [("weight", "kg", 45, 120, 1), ("sodium", "mEq/L", 110, 132, 0), ("target sodium", "mEq/L", 135, 140, 0)],
     (100, 1200, 1)),
    (31, "Fractional Excretion of Sodium (FENa)", EQN, "Nephrology",
     "Distinguishes prerenal azotemia from intrinsic renal injury.",
     "FENa [%] = 100 * (urine Na * serum creatinine) / (serum Na * urine creatinine)",
     "What is the patient's fractional excretion of sodium, as a percentage?",
     [("urine sodium", "mEq/L", 5, 120, 0), ("serum creatinine", "mg/dL", 0.6, 6.0, 1), ("serum sodium", "mEq/L", 125, 150, 0), ("urine creatinine", "mg/dL", 20, 250, 0)],
     (0.1, 6, 2)),
    (32, "Fractional Excretion of Urea (FEUrea)", EQN, "Nephrology",
     "Prerenal assessment valid under diuretics.",
     "FEUrea [%] = 100 * (urine urea * serum creatinine) / (BUN * urine creatinine)",
     "What is the patient's fractional excretion of urea, as a percentage?",
     [("urine urea", "mg/dL", 100, 900, 0), ("serum creatinine", "mg/dL", 0.6, 6.0, 1), ("BUN", "mg/dL", 10, 90, 0), ("urine creatinine", "mg/dL", 20, 250, 0)],
     (10, 70, 2)),
    (33, "Maintenance Fluids (4-2-1 Rule)", EQN, "General Practice/Family Medicine",
     "Hourly maintenance fluid rate by weight bands.",
     "rate [mL/h] = 4 mL/kg/h for the first 10 kg + 2 mL/kg/h for the next 10 kg + 1 mL/kg/h for each kg above 20 kg",
     "What is the patient's maintenance fluid rate in mL/h by the 4-2-1 rule?",
     [("weight", "kg", 6, 110, 1)],
     (24, 150, 1)),
    (34, "Glasgow-Blatchford Bleeding Score", RULE, "Hepatology/Gastroenterology",
     "Upper GI bleed risk needing intervention.",
     "Points for BUN bands, hemoglobin bands (sex-specific), systolic BP bands, pulse >= 100, melena, syncope, hepatic disease, cardiac failure; total 0-23",
     "What is the patient's Glasgow-Blatchford score for upper GI bleeding?",
     [("hemoglobin", "g/dL", 6, 16, 1), ("BUN", "mg/dL", 10, 100, 0), ("systolic blood pressure", "mmHg", 75, 150, 0)],
     (0, 23, 0)),
    (35, "PERC Rule for Pulmonary Embolism", RULE, "Pulmonology & Critical Care",
     "Rules out PE without testing when all eight criteria are absent.",
     "Criteria: age >= 50; heart rate >= 100; SaO2 < 95%; unilateral leg swelling; hemoptysis; recent surgery or trauma; prior PE/DVT; hormone use. PERC count = number present (0 rules out)",
     "How many PERC criteria does this patient meet?",
     [("age", "years", 20, 80, 0), ("oxygen saturation", "%", 88, 100, 0), ("heart rate", "bpm", 60, 130, 0)],
     (0, 8, 0)),
    (36, "Caprini Score 2005", RULE, "Thrombosis/Hematology",
     "Perioperative venous thromboembolism risk.",
     "Weighted risk factors: age bands (41-60 +1, 61-74 +2, >= 75 +3); minor surgery +1; major surgery +2; malignancy +2; history of VTE +3; stroke +5; pregnancy or postpartum +1; plus additional 1-5 point items",
     "What is the patient's Caprini score (2005 version) for VTE risk?",
     [("age", "years", 25, 90, 0), ("major surgery", None, 0, 1, 0)],
     (0, 20, 0)),
    (37, "Revised Cardiac Risk Index", RULE, "Cardiology",
     "Perioperative major cardiac complication risk.",
     "High-risk surgery +1; ischemic heart disease +1; congestive heart failure +1; cerebrovascular disease +1; insulin therapy +1; creatinine > 2 mg/dL +1",
     "What is the patient's Revised Cardiac Risk Index?",
     [("creatinine", "mg/dL", 0.6, 4.0, 1), ("insulin therapy", None, 0, 1, 0)],
     (0, 6, 0)),
    (38, "PSI/PORT Score", RULE, "Pulmonology & Critical Care",
     "Pneumonia mortality risk class.",
     "Age (+age in years, -10 if female) + nursing home +10 + comorbidity points + exam findings points + lab/radiography points",
     "What is the patient's PSI/PORT pneumonia severity score?",
     [("age", "years", 30, 95, 0), ("respiratory rate", "breaths/min", 12, 42, 0)],
     (30, 180, 0)),
    (39, "SIRS Criteria", RULE, "Infectious Disease",
     "Systemic inflammatory response syndrome count.",
     "Temperature > 38 C or < 36 C +1; heart rate > 90 +1; respiratory rate > 20 or PaCO2 < 32 mmHg +1; WBC > 12,000 or < 4,000 or > 10% bands +1",
     "How many SIRS criteria does the patient meet?",
     [("temperature", "C", 35, 41, 1), ("heart rate", "bpm", 60, 150, 0), ("WBC", "10^3/uL", 2, 25, 1)],
     (0, 4, 0)),
    (40, "Charlson Comorbidity Index", RULE, "General Practice/Family Medicine",
     "Ten-year survival weighting of comorbidities.",
     "Weighted conditions: MI, CHF, PVD, CVA, dementia, COPD, connective tissue disease, ulcer, mild liver disease, diabetes +1 each; hemiplegia, renal disease, diabetes with damage, malignancy +2; moderate/severe liver disease +3; metastatic tumor, AIDS +6",
     "What is the patient's Charlson Comorbidity Index?",
     [("age", "years", 40, 90, 0), ("diabetes", None, 0, 1, 0)],
     (0, 15, 0)),
    (41, "Albumin Corrected Anion Gap", EQN, "Nephrology",
     "Anion gap adjusted for hypoalbuminemia.",
     "corrected AG [mEq/L] = AG + 2.5 * (4.0 - albumin [g/dL])",
     "What is the patient's albumin-corrected anion gap in mEq/L?",
     [("anion gap", "mEq/L", 4, 28, 0), ("albumin", "g/dL", 1.5, 4.5, 1)],
     (6, 34, 2)),
    (42, "Delta Gap", EQN, "Nephrology",
     "Concurrent acid-base disturbance screen; negative values flag a non-gap acidosis.",
     "delta gap [mEq/L] = (AG - 12) - (24 - HCO3)",
     "What is the patient's delta gap in mEq/L?",
     [("anion gap", "mEq/L", 6, 30, 0), ("bicarbonate", "mEq/L", 6, 30, 0)],
     (-9, -1, 1)),
    (43, "Delta Ratio", EQN, "Nephrology",
     "Ratio form of the delta gap for mixed disorders.",
     "delta ratio = (AG - 12) / (24 - HCO3)",
     "What is the patient's delta ratio?",
     [("anion gap", "mEq/L", 14, 34, 0), ("bicarbonate", "mEq/L", 6, 22, 0)],
     (0.3, 2.5, 2)),
    (44, "Winters' Formula", EQN, "Pulmonology & Critical Care",
     "Expected respiratory compensation in metabolic acidosis.",
     "expected PaCO2 [mmHg] = 1.5 * HCO3 + 8 (+/- 2)",
     "What is the patient's expected PaCO2 by Winters' formula, in mmHg?",
     [("bicarbonate", "mEq/L", 5, 24, 0)],
     (15, 44, 1)),
    (45, "LDL Calculated (Friedewald)", EQN, "Cardiology",
     "LDL cholesterol from the standard lipid panel.",
     "LDL [mg/dL] = total cholesterol - HDL - triglycerides / 5 (valid for triglycerides < 400 mg/dL)",
     "What is the patient's calculated LDL cholesterol in mg/dL?",
     [("total cholesterol", "mg/dL", 120, 320, 0), ("HDL", "mg/dL", 25, 90, 0), ("triglycerides", "mg/dL", 50, 390, 0)],
     (40, 250, 1)),
    (46, "HOMA-IR", EQN, "Endocrinology & Metabolism",
     "Insulin resistance from fasting labs.",
     "HOMA-IR = fasting insulin [uU/mL] * fasting glucose [mg/dL] / 405",
     "What is the patient's HOMA-IR insulin resistance index?",
     [("fasting insulin", "uU/mL", 2, 40, 1), ("fasting glucose", "mg/dL", 70, 250, 0)],
     (0.5, 15, 2)),
    (47, "Steroid Conversion Calculator", EQN, "Clinical Pharmacology",
     "Equivalent dosing across corticosteroids.",
     "dose_target [mg] = dose_source * (equivalent_target / equivalent_source); equivalents: hydrocortisone 20, prednisone 5, methylprednisolone 4, dexamethasone 0.75",
     "What is the equivalent dose in mg after the steroid conversion?",
     [("source dose", "mg", 5, 100, 0)],
     (1, 400, 2)),
    (48, "Morphine Milligram Equivalents", EQN, "Clinical Pharmacology",
     "Total daily opioid dose normalized to oral morphine.",
     "MME/day = sum(daily dose * factor); factors: oral morphine 1, oxycodone 1.5, hydrocodone 1, hydromorphone 4, oral fentanyl-equivalents per label",
     "What is the patient's total daily morphine milligram equivalent (MME)?",
     [("oxycodone daily dose", "mg", 10, 120, 0)],
     (10, 300, 1)),
    (49, "Estimated Average Glucose (eAG)", EQN, "Endocrinology & Metabolism",
     "Average glucose implied by HbA1c.",
     "eAG [mg/dL] = 28.7 * HbA1c [%] - 46.7",
     "What is the patient's estimated average glucose in mg/dL from the HbA1c?",
     [("HbA1c", "%", 5.0, 13.0, 1)],
     (95, 330, 1)),
    (50, "MDRD GFR Equation", EQN, "Nephrology",
     "Four-variable MDRD estimate of GFR.",
     "GFR [mL/min/1.73 m2] = 175 * Scr^-1.154 * age^-0.203 * 0.742 (if female) * 1.212 (if Black)",
     "What is the patient's estimated GFR by the four-variable MDRD equation?",
     [("serum creatinine", "mg/dL", 0.6, 5.0, 2), ("age", "years", 20, 90, 0)],
     (8, 120, 2)),
    (51, "Cardiac Output (Fick)", EQN, "Cardiology",
     "Cardiac output from oxygen consumption and arteriovenous difference.",
     "CO [L/min] = VO2 / ((SaO2 - SvO2) * Hb * 13.4)",
     "What is the patient's cardiac output in L/min by the Fick principle?",
     [("VO2", "mL/min", 150, 400, 0), ("SaO2", "fraction", 0.85, 1.0, 2), ("SvO2", "fraction", 0.4, 0.8, 2), ("hemoglobin", "g/dL", 7, 17, 1)],
     (2, 10, 2)),
    (52, "Absolute Neutrophil Count", EQN, "Thrombosis/Hematology",
     "Circulating neutrophils from WBC and differential.",
     "ANC [cells/uL] = WBC [cells/uL] * (neutrophils % + bands %) / 100",
     "What is the patient's absolute neutrophil count?",
     [("WBC", "10^3/uL", 1, 20, 1), ("neutrophils", "%", 20, 85, 0), ("bands", "%", 0, 15, 0)],
     (500, 15000, 0)),
    (53, "Corrected Reticulocyte Count", EQN, "Thrombosis/Hematology",
     "Reticulocyte percentage adjusted for anemia.",
     "corrected reticulocytes [%] = reticulocyte % * (patient hematocrit / 45)",
     "What is the patient's corrected reticulocyte count, as a percentage?",
     [("reticulocytes", "%", 0.5, 8.0, 1), ("hematocrit", "%", 18, 45, 0)],
     (0.2, 8, 2)),
    (54, "Transferrin Saturation", EQN, "Thrombosis/Hematology",
     "Iron bound to transferrin.",
     "TSAT [%] = 100 * serum iron / TIBC",
     "What is the patient's transferrin saturation, as a percentage?",
     [("serum iron", "ug/dL", 20, 250, 0), ("TIBC", "ug/dL", 200, 500, 0)],
     (5, 60, 2)),
    (55, "Parkland Formula for Burns", EQN, "Pulmonology & Critical Care",
     "Initial 24-hour crystalloid volume after burns.",
     "fluid [mL] = 4 mL * weight [kg] * % total body surface area burned; half given in the first 8 hours",
     "What is the patient's 24-hour Parkland fluid requirement in mL?",
     [("weight", "kg", 40, 120, 1), ("TBSA burned", "%", 10, 60, 0)],
     (2000, 25000, 0)),
]

SEX = ["male", "female"]

EXTRA_REAL_FORMULAS = [
    "Alvarado Score for Acute Appendicitis", "Ranson's Criteria for Pancreatitis",
    "SOFA Score", "qSOFA Score", "NIH Stroke Scale", "ABCD2 Score for TIA",
    "TIMI Risk Score for UA/NSTEMI", "GRACE ACS Risk Score", "Killip Classification",
    "Framingham 10-year CVD Risk", "ASCVD Risk Estimator", "Duke Criteria for Endocarditis",
    "Light's Criteria for Pleural Effusion", "A-a Oxygen Gradient", "Oxygenation Index",
    "ROX Index", "Shock Index", "Modified Early Warning Score", "NEWS2 Score",
    "Braden Scale for Pressure Ulcers", "Morse Fall Scale", "Epworth Sleepiness Scale",
    "STOP-BANG Score", "Berlin Questionnaire", "MMSE Scoring", "MoCA Scoring",
    "CIWA-Ar for Alcohol Withdrawal", "COWS Score for Opiate Withdrawal",
    "Apgar Score", "Ballard Maturational Assessment", "Bishop Score",
    "Burch-Wartofsky Point Scale", "FRAX Fracture Risk", "DAS28 for Rheumatoid Arthritis",
    "SLEDAI-2K Score", "PASI Score", "SCORAD Index", "Ottawa Ankle Rule",
    "Ottawa Knee Rule", "NEXUS Criteria for C-Spine Imaging", "Canadian CT Head Rule",
    "PECARN Pediatric Head Injury Rule", "Rockall Score", "AIMS65 Score",
    "Lille Model for Alcoholic Hepatitis", "Maddrey's Discriminant Function",
    "APRI Score", "NAFLD Fibrosis Score", "Bristol Stool Scale", "Mayo Score for UC",
    "Harvey-Bradshaw Index", "ASA Physical Status", "Mallampati Score",
    "Aldrete Score", "Bromage Scale", "RASS Sedation Scale", "CAM-ICU for Delirium",
    "4AT Delirium Screen", "Geneva Score for PE", "Padua Prediction Score",
]

ORGANS = ["Renal", "Hepatic", "Cardiac", "Pulmonary", "Cerebral", "Splenic",
          "Pancreatic", "Thyroid", "Adrenal", "Gastric", "Ocular", "Dermal",
          "Skeletal", "Vascular", "Lymphatic"]
CONDITIONS = ["Perfusion", "Clearance", "Reserve", "Strain", "Recovery",
              "Deficit", "Burden", "Velocity", "Compliance", "Resistance",
              "Saturation", "Turnover", "Gradient", "Fraction"]
KINDS = ["Index", "Ratio", "Quotient", "Coefficient", "Estimator", "Nomogram",
         "Panel", "Composite", "Profile", "Metric"]


def fixed(value: float, dp: int) -> str:
    return f"{Decimal(str(round(value, dp))):.{dp}f}" if dp else str(int(round(value)))


def make_bank_entries():
    entries = []
    for cid, name, _cat, _spec, description, expression, _q, _vars, _gold in CALCULATORS:
        entries.append({
            "formula_id": cid,
            "calculator_id": cid,
            "name": name,
            "description": description,
            "expression": expression,
            "source": "reference library v1",
        })
    return entries


_MARKERS = [
    "lactate", "ferritin", "procalcitonin", "troponin", "amylase", "lipase",
    "fibrinogen", "ddimer", "cortisol", "prolactin", "ceruloplasmin",
    "haptoglobin", "myoglobin", "calcitonin", "renin", "aldosterone",
    "gastrin", "vasopressin", "osteocalcin", "thyroglobulin",
]


def make_distractors(rng: random.Random):
    entries = []
    next_id = 56
    for name in EXTRA_REAL_FORMULAS:
        markers = rng.sample(_MARKERS, 3)
        entries.append({
            "formula_id": next_id,
            "calculator_id": None,
            "name": name,
            "description": (
                f"{name}: published bedside aid weighing "
                f"{markers[0]} and {markers[1]} findings."
            ),
            "expression": (
                f"{name} total = component items summed; covariates include "
                f"{markers[0]}, {markers[1]}, {markers[2]}."
            ),
            "source": "extended catalogue",
        })
        next_id += 1
    seen = set()
    while next_id <= 785:
        name = (
            f"{rng.choice(ORGANS)} {rng.choice(CONDITIONS)} "
            f"{rng.choice(KINDS)} {rng.randrange(2, 98)}"
        )
        if name in seen:
            continue
        seen.add(name)
        a = rng.randrange(2, 9)
        markers = rng.sample(_MARKERS, 2)
        entries.append({
            "formula_id": next_id,
            "calculator_id": None,
            "name": name,
            "description": (
                f"{name}: research-grade measure of {name.split()[1].lower()} "
                f"trends tracked against {markers[0]}."
            ),
            "expression": f"value = {a} * {markers[0]} / baseline {markers[1]}",
            "source": "extended catalogue",
        })
        next_id += 1
    return entries


def build_rows():
    rng = random.Random(20250810)
    by_id = {c[0]: c for c in CALCULATORS}
    removed_quota = {13: 20, 28: 20, 11: 11, 36: 10}

    assignment: dict[int, int] = {451: 3, 369: 10}
    for row in NEG46:
        assignment[row] = 42

    free_rows = [r for r in range(1, 1049) if r not in assignment]
    rng.shuffle(free_rows)
    cursor = 0
    for calc_id, quota in removed_quota.items():
        for _ in range(quota):
            assignment[free_rows[cursor]] = calc_id
            cursor += 1
    # Everything else round-robins over the calculators that survive cleaning.
    survivors = [c[0] for c in CALCULATORS if c[0] not in removed_quota and c[0] != 42]
    for i, row in enumerate(free_rows[cursor:]):
        assignment[row] = survivors[i % len(survivors)]

    rows = []
    for row_number in sorted(assignment):
        calc_id = assignment[row_number]
        cid, name, category, _spec, _desc, _expr, question, variables, gold_range = by_id[calc_id]
        age = rng.randrange(23, 91)
        sex = rng.choice(SEX)
        entities = {}
        lab_bits = []
        for var_name, unit, lo, hi, dp in variables:
            if var_name == "age":
                value = str(age)
            elif var_name == "sex":
                value = sex
            elif unit is None and hi == 1 and dp == 0:
                value = rng.choice(["yes", "no"])
            else:
                value = fixed(rng.uniform(lo, hi), dp)
            entities[var_name] = {"value": value, "unit": unit}
            lab_bits.append(f"{var_name} {value}{' ' + unit if unit else ''}")
        note = (
            f"A {age}-year-old {sex} presents for evaluation. "
            f"Findings: {'; '.join(lab_bits)}. "
            f"The clinical team needs the {name} result."
        )

        if row_number == 369:
            # The worked sodium-correction case (hyperglycemia, Hillier factor).
            note = (
                "A 57-year-old male with a diabetic foot infection presents with "
                "massive hyperglycaemia and haemodynamic instability. Admission "
                "labs: serum sodium 127 mEq/L (127 mmol/L); serum glucose 527 "
                "mg/dL. The team asks for the glucose-corrected sodium."
            )
            question = (
                "What is the corrected sodium concentration (mEq/L) using the "
                "Hillier 1999 equation at admission?"
            )
            gold = "137.248"
            lower, upper = "130.39", "144.11"
            entities = {
                "sodium": {"value": "127", "unit": "mEq/L"},
                "glucose": {"value": "527", "unit": "mg/dL"},
            }
            explanation = (
                "Hillier correction: corrected Na = measured Na + 0.024 x "
                "(glucose - 100) = 127 + 0.024 x (527 - 100) = 127 + 10.248 "
                "= 137.248 mEq/L."
            )
        else:
            g_lo, g_hi, g_dp = gold_range
            gold = fixed(rng.uniform(g_lo, g_hi), g_dp)
            if category == RULE:
                lower = upper = gold
            elif row_number == 468:
                # Matches the documented example of the reversed-limit bug:
                # stored as lower -4, upper -5 around a gold of -4.5.
                gold = "-4.5"
                lower, upper = "-5", "-4"
            else:
                band = abs(Decimal(gold)) * Decimal("0.05")
                lower = str(Decimal(gold) - band)
                upper = str(Decimal(gold) + band)
            explanation = (
                f"Per the gold annotation, applying the {name} rule to the "
                f"extracted values yields {gold}."
            )

        if row_number in NEG46 or row_number == 468:
            lower, upper = upper, lower  # the documented reversed-limit bug

        rows.append({
            "row_number": row_number,
            "calculator_id": calc_id,
            "calculator_name": name,
            "category": category,
            "patient_note": note,
            "question": question,
            "gold_answer": gold,
            "lower_limit": lower,
            "upper_limit": upper,
            "gold_explanation": explanation,
            "gold_entities": entities,
        })
    return rows


def make_queries():
    queries = []
    for cid, name, _cat, _spec, description, _expr, question, _vars, _gold in CALCULATORS:
        queries.append({
            "query": f"{question} ({name.lower()} task)",
            "gold_formula_id": cid,
        })
    return queries


def write_jsonl(path: Path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def main():
    rng = random.Random(99)
    bank = make_bank_entries()
    write_jsonl(BANK_PATH, bank)
    write_jsonl(FIXTURES / "bank_785.jsonl", bank + make_distractors(rng))

    rows = build_rows()
    assert len(rows) == 1048, len(rows)
    write_jsonl(FIXTURES / "cases_1048.jsonl", rows)

    removed = {
        r["row_number"]
        for r in rows
        if r["calculator_id"] in (13, 28, 11, 36)
        or r["row_number"] == 451
        or r["row_number"] in NEG46
    }
    assert len(removed) == 108, len(removed)

    by_row = {r["row_number"]: r for r in rows}
    subset_rows = [369]
    seen_calcs = {10}
    for r in sorted(by_row):
        if len(subset_rows) == 10:
            break
        row = by_row[r]
        if r in removed or row["calculator_id"] in seen_calcs:
            continue
        subset_rows.append(r)
        seen_calcs.add(row["calculator_id"])
    write_jsonl(FIXTURES / "cases_10.jsonl", [by_row[r] for r in sorted(subset_rows)])

    write_jsonl(FIXTURES / "retrieval_queries.jsonl", make_queries())

    specialty = {str(c[0]): c[3] for c in CALCULATORS}
    (FIXTURES / "specialty_map.json").write_text(
        json.dumps(specialty, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"bank: {len(bank)} entries; dataset: {len(rows)} rows; "
          f"removable: {len(removed)}; subset: {len(subset_rows)}")


if __name__ == "__main__":
    main()
