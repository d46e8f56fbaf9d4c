namespace malab {}
